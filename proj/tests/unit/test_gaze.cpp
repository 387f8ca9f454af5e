#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "../support/gradcheck.hpp"
#include "gazevit/errors.hpp"
#include "gazevit/gaze.hpp"
#include "gazevit/tasks.hpp"

using namespace gazevit;
using namespace gazevit::gaze;

namespace {

GazePredictorConfig small_predictor(bool position_bias = false) {
    GazePredictorConfig c;
    c.image_width = 96;
    c.image_height = 96;
    c.input_downscale = 2;  // 48 x 48 input, 24 x 24 heatmap
    c.position_bias = position_bias;
    c.seed = 3;
    return c;
}

tasks::BlobSpec small_blobs() {
    tasks::BlobSpec s;
    s.width = 96;
    s.height = 96;
    s.sigma = 4.0;
    return s;
}

policy::PolicyConfig tiny_policy(int proprio_dim, int action_dim) {
    policy::PolicyConfig c;
    c.chunk_size = 4;
    c.action_dim = action_dim;
    c.proprio_dim = proprio_dim;
    c.dim = 16;
    c.heads = 2;
    c.depth = 1;
    c.time_features = 8;
    c.flow_steps = 2;
    c.use_image = true;
    c.encoder = encoder::EncoderConfig::for_pattern(fovea::PatternKind::Foveated, 1, 16, 2);
    return c;
}

}  // namespace

TEST_CASE("spatial softmax examples") {
    Heatmap delta{Mat::Zero(6, 8)};
    delta.values(4, 1) = 50.0;
    const GazePoint d = spatial_softmax(delta);
    CHECK(d.x() == doctest::Approx(1.5 / 8).epsilon(1e-6));
    CHECK(d.y() == doctest::Approx(4.5 / 6).epsilon(1e-6));

    for (auto [h, w] : {std::pair{1, 1}, std::pair{5, 7}, std::pair{36, 36}}) {
        const GazePoint u = spatial_softmax(Heatmap{Mat::Constant(h, w, 0.3)});
        CHECK(u.x() == 0.5);
        CHECK(u.y() == 0.5);
    }

    Heatmap two{Mat::Zero(3, 4)};  // centers 0.125, 0.375, 0.625, 0.875
    two.values(1, 0) = two.values(1, 3) = 40.0;
    const GazePoint t = spatial_softmax(two);
    CHECK(std::abs(t.x() - 0.5) < 1e-4);
    CHECK(std::abs(t.y() - 0.5) < 1e-4);

    CHECK_THROWS_AS(spatial_softmax(Heatmap{Mat::Constant(2, 2, std::nan(""))}), InvalidInput);
    CHECK_THROWS_AS(spatial_softmax(Heatmap{Mat::Zero(2, 2)}, 0.0), InvalidInput);
}

TEST_CASE("spatial softmax stays inside the cell-center hull") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const Mat v = nn::standard_normal(9, 11, rng) * 20.0;
        const GazePoint g = spatial_softmax(Heatmap{v}, 0.5);
        CHECK(g.x() >= 0.5 / 11);
        CHECK(g.x() <= 10.5 / 11);
        CHECK(g.y() >= 0.5 / 9);
        CHECK(g.y() <= 8.5 / 9);
    }
}

TEST_CASE("temperature limits") {
    Rng rng(5);
    std::vector<double> logits(6 * 6);
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = 0.02 * static_cast<double>(i);
    std::shuffle(logits.begin(), logits.end(), rng);
    Heatmap m{Eigen::Map<Mat>(logits.data(), 6, 6)};
    Eigen::Index r, c;
    m.values.maxCoeff(&r, &c);
    const GazePoint cold = spatial_softmax(m, 1e-3);
    CHECK(std::abs(cold.x() - (c + 0.5) / 6) < 1e-4);
    CHECK(std::abs(cold.y() - (r + 0.5) / 6) < 1e-4);
    const GazePoint hot = spatial_softmax(m, 1e3);
    CHECK(std::abs(hot.x() - 0.5) < 1e-4);
    CHECK(std::abs(hot.y() - 0.5) < 1e-4);
}

TEST_CASE("differentiable spatial softmax agrees with the heatmap form") {
    Rng rng(6);
    const Mat v = nn::standard_normal(4, 5, rng);
    Tape tape(false);
    Mat flat(1, 20);
    for (int i = 0; i < 4; ++i) flat.block(0, i * 5, 1, 5) = v.row(i);
    const Mat k = spatial_softmax(tape.constant(flat), 4, 5, 0.7).value();
    const GazePoint g = spatial_softmax(Heatmap{v}, 0.7);
    CHECK(k(0, 0) == doctest::Approx(g.x()).epsilon(1e-12));
    CHECK(k(0, 1) == doctest::Approx(g.y()).epsilon(1e-12));
    const Mat centers = cell_centers(4, 5);
    CHECK(centers(6, 0) == doctest::Approx(1.5 / 5));
    CHECK(centers(6, 1) == doctest::Approx(1.5 / 4));
}

TEST_CASE("predictor shapes and validation") {
    GazePredictor p(small_predictor());
    Rng rng(7);
    const auto img = tasks::render_blob(small_blobs(), GazePoint(0.3, 0.6), rng);
    CHECK(p.prepare(img).rows() == 48 * 48);
    const Heatmap h = p.heatmap(img);
    CHECK(h.height() == 24);
    CHECK(h.width() == 24);
    CHECK_NOTHROW(p.predict(ImageBuffer(64, 64, 3)));  // resized to the configured size
    CHECK_THROWS_AS(p.predict(ImageBuffer(96, 96, 1)), InvalidInput);

    GazePredictorConfig bad = small_predictor();
    bad.input_downscale = 5;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
    bad = small_predictor();
    bad.temperature = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("predictor gradients with position bias") {
    auto cfg = small_predictor(true);
    cfg.image_width = cfg.image_height = 32;
    cfg.enc1 = cfg.enc2 = cfg.dec = 4;
    cfg.enc3 = 4;
    GazePredictor p(cfg);
    Rng rng(8);
    for (std::size_t i = 0; i < p.params().size(); ++i) {
        auto& v = p.params()[i].value;
        v += 0.1 * nn::standard_normal(v.rows(), v.cols(), rng);
    }
    tasks::BlobSpec spec;
    spec.width = spec.height = 32;
    spec.sigma = 3;
    const Mat input = p.prepare(tasks::render_blob(spec, GazePoint(0.4, 0.6), rng));
    Mat label(1, 2);
    label << 0.4, 0.6;
    auto loss = [&](bool acc) {
        Tape tape(acc);
        Var k = spatial_softmax(p.logits(tape, input, 1), cfg.grid_height(), cfg.grid_width(), 0.8);
        Var l = ad::mse(k, label);
        if (acc) tape.backward(l);
        return l.value()(0, 0);
    };
    const auto report = testing::check_gradients(p.params(), loss);
    CAPTURE(report.worst);
    CHECK(report.max_rel < 1e-4);
}

TEST_CASE("constant label regression") {
    const auto data = tasks::blob_dataset(64, small_blobs(), 9);
    std::vector<GazeExample> constant;
    for (const auto& ex : data) constant.push_back({ex.image, GazePoint(0.3, 0.7)});
    GazePredictor p(small_predictor(true));
    train_gaze_predictor(p, constant, {400, 16, 1e-2, 1});
    const auto held = tasks::blob_dataset(16, small_blobs(), 10);
    double worst = 0;
    for (const auto& ex : held) {
        const GazePoint g = p.predict(ex.image);
        worst = std::max(worst, std::hypot(g.x() - 0.3, g.y() - 0.7));
    }
    MESSAGE("worst constant-label deviation " << worst);
    CHECK(worst < 0.02);
}

TEST_CASE("trained predictor is translation equivariant by one cell") {
    const auto spec = small_blobs();
    GazePredictor p(small_predictor());
    const auto losses = train_gaze_predictor(p, tasks::blob_dataset(128, spec, 11), {300, 16, 3e-3, 2});
    CHECK(losses.back() < losses.front());
    auto clean = spec;
    clean.noise = 0.0;
    const double cell = 1.0 / p.config().grid_width();
    Rng rng(12);
    double worst = 0;
    for (const auto& [x, y] : {std::pair{0.35, 0.4}, std::pair{0.5, 0.5}, std::pair{0.6, 0.3}, std::pair{0.42, 0.62}}) {
        const GazePoint a = p.predict(tasks::render_blob(clean, GazePoint(x, y), rng));
        const GazePoint b = p.predict(tasks::render_blob(clean, GazePoint(x + cell, y), rng));
        const GazePoint c = p.predict(tasks::render_blob(clean, GazePoint(x, y + cell), rng));
        worst = std::max({worst, std::abs((b.x() - a.x()) - cell), std::abs(b.y() - a.y()),
                          std::abs((c.y() - a.y()) - cell), std::abs(c.x() - a.x())});
    }
    MESSAGE("worst shift deviation " << worst / cell << " cells");
    CHECK(worst < 0.1 * cell);
}

TEST_CASE("gaze helpers") {
    const GazePoint m = merge_gaze(GazePoint(0.2, 0.4), GazePoint(0.4, 0.8));
    CHECK(m.x() == doctest::Approx(0.3));
    CHECK(m.y() == doctest::Approx(0.6));
    RowVec j(3);
    j << 1, 2, 3;
    const RowVec a = append_gaze(j, GazePoint(0.25, 0.75));
    CHECK(a.size() == 5);
    CHECK(a(3) == 0.25);
    CHECK(a(4) == 0.75);
    GazeHistory h;
    CHECK(h.last() == GazePoint(0.5, 0.5));
    CHECK_FALSE(h.initialized());
}

TEST_CASE("two-stage step") {
    auto pcfg = small_predictor();
    pcfg.image_width = pcfg.image_height = 288;
    pcfg.input_downscale = 4;
    GazePredictor predictor(pcfg);
    const policy::FlowPolicy pol(tiny_policy(3 + 2, 2));
    Rng rng(13);
    const auto img = tasks::render_blob(tasks::BlobSpec{}, GazePoint(0.3, 0.3), rng);
    RowVec joints(3);
    joints << 0.1, 0.2, 0.3;
    const GazeStep s = two_stage_step(img, joints, predictor, pol, 1);
    CHECK(s.gaze == predictor.predict(img));
    CHECK(s.trajectory.size() == 1);
    CHECK(s.tokens.gaze.value() == s.gaze);
    CHECK(s.chunk.length() == 4);
    CHECK(s.chunk.dim() == 2);
    const policy::FlowPolicy no_gaze(tiny_policy(3, 2));
    CHECK_THROWS_AS(two_stage_step(img, joints, predictor, no_gaze, 1), InvalidInput);
}

TEST_CASE("gaze-as-action step") {
    policy::FlowPolicy pol(tiny_policy(2 + 2, 2 + 2));
    Rng rng(14);
    for (std::size_t i = 0; i < pol.params().size(); ++i) {
        auto& v = pol.params()[i].value;
        v += 0.05 * nn::standard_normal(v.rows(), v.cols(), rng);
    }
    const auto img = tasks::render_blob(tasks::BlobSpec{}, GazePoint(0.7, 0.2), rng);
    GazeHistory history;
    RowVec pos(2);
    pos << 0.4, 0.4;
    const GazeStep first = gaze_as_action_step(img, pos, history, pol, 2);
    CHECK(first.gaze == GazePoint(0.5, 0.5));
    CHECK(first.chunk.length() == 4);
    CHECK(first.chunk.dim() == 4);
    CHECK(first.trajectory.size() == 4);
    const auto& a = first.chunk.actions;
    CHECK(history.last() == GazePoint(a(0, 2), a(0, 3)));
    const GazeStep second = gaze_as_action_step(img, pos, history, pol, 3);
    CHECK(second.gaze == first.trajectory.front());

    const policy::FlowPolicy narrow(tiny_policy(4, 2));
    CHECK_THROWS_AS(gaze_as_action_step(img, pos, history, narrow, 1), InvalidInput);
}

TEST_CASE("gaze CSV and heatmap output") {
    const auto dir = std::filesystem::temp_directory_path() / "gazevit_test_gaze";
    std::filesystem::create_directories(dir);
    const std::vector<GazeLogRow> rows{{0, GazePoint(0.1, 0.2), GazeSource::Human},
                                       {1, GazePoint(1.0 / 3, 0.7), GazeSource::Unet},
                                       {2, GazePoint(0.9, 0.123456789012345), GazeSource::Policy}};
    write_gaze_csv(rows, dir / "gaze.csv");
    const auto back = read_gaze_csv(dir / "gaze.csv");
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].frame_id == rows[i].frame_id);
        CHECK(back[i].gaze == rows[i].gaze);
        CHECK(back[i].source == rows[i].source);
    }
    {
        std::ofstream bad(dir / "bad.csv");
        bad << "frame,x,y\n0,0.1,0.2\n";
    }
    CHECK_THROWS_AS(read_gaze_csv(dir / "bad.csv"), IoError);
    CHECK_THROWS_AS(read_gaze_csv(dir / "missing.csv"), IoError);

    Heatmap h{Mat::Zero(4, 6)};
    h.values(1, 2) = 3.0;
    write_heatmap_png(h, dir / "heat.png", 1.0, 4);
    CHECK(std::filesystem::file_size(dir / "heat.png") > 0);
    std::filesystem::remove_all(dir);
}
