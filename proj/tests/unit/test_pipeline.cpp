#include <doctest.h>

#include <cmath>

#include "gazevit/gaze.hpp"
#include "gazevit/tasks.hpp"

using namespace gazevit;

TEST_CASE("predicted gaze puts the blob inside the fovea") {
    gaze::GazePredictor predictor(gaze::GazePredictorConfig{});
    const tasks::BlobSpec spec;
    gaze::train_gaze_predictor(predictor, tasks::blob_dataset(192, spec, 1), {300, 16, 3e-3, 0});
    const auto held = tasks::blob_dataset(60, spec, 2);
    const double rate = gaze::fovea_hit_rate(predictor, held);
    const double err = gaze::mean_gaze_error(predictor, held);
    MESSAGE("fovea hit rate " << rate << ", mean error " << err);
    CHECK(rate >= 0.9);
    CHECK(err < 0.05);
}

TEST_CASE("inside_fovea geometry") {
    CHECK(gaze::inside_fovea(GazePoint(0.5, 0.5), GazePoint(0.5, 0.5)));
    CHECK(gaze::inside_fovea(GazePoint(0.2, 0.7), GazePoint(0.2 + 15.0 / 288, 0.7 - 16.0 / 288)));
    CHECK_FALSE(gaze::inside_fovea(GazePoint(0.2, 0.7), GazePoint(0.2 + 16.0 / 288, 0.7)));
    CHECK_FALSE(gaze::inside_fovea(GazePoint(0.2, 0.7), GazePoint(0.2, 0.7 - 17.0 / 288)));
}

TEST_CASE("gaze-as-action policy beats a fixed central gaze") {
    const tasks::ScriptedSpec spec;
    const auto train = tasks::scripted_episodes(12, spec, 3);
    const auto eval = tasks::scripted_episodes(3, spec, 4);
    // Error of always predicting the image centre for the next gaze.
    double centre = 0;
    int n = 0;
    for (const auto& ep : eval)
        for (Eigen::Index t = 1; t < ep.gaze.rows(); ++t, ++n)
            centre += std::hypot(ep.gaze(t, 0) - 0.5, ep.gaze(t, 1) - 0.5);
    centre /= n;
    tasks::ScriptedRunOptions opt;
    opt.steps = 1000;
    opt.batch = 32;
    const auto r = tasks::run_scripted_variant(tasks::Variant::FovAct, train, eval, opt);
    MESSAGE("closed-loop gaze error " << r.gaze_error << " vs centre " << centre << ", action error "
                                      << r.action_error << ", " << r.seconds << " s");
    CHECK(r.gaze_error < centre);
}
