#pragma once

#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include "gazevit/gaze.hpp"
#include "gazevit/policy.hpp"

namespace gazevit::tasks {

using nn::Rng;

// Conditional two-class Gaussian mixture; class one-hot is the proprio input.
struct MixtureComponent {
    RowVec mean;  // 1 x 2
    Mat cov;      // 2 x 2
};

struct MixtureTask {
    std::vector<MixtureComponent> classes;

    static MixtureTask standard();
    RowVec one_hot(int cls) const;
    RowVec draw(int cls, Rng& rng) const;
    // n samples per class, actions 1 x 2.
    std::vector<policy::PolicySample> dataset(int per_class, Rng& rng) const;
    policy::PolicyConfig policy_config(std::uint64_t seed) const;
};

struct Moments {
    RowVec mean;
    Mat cov;  // unbiased
};
Moments sample_moments(const Mat& samples);  // rows are samples

// White Gaussian blob on a dim noisy background; its center is the gaze label.
struct BlobSpec {
    int width = 288;
    int height = 288;
    double sigma = 10.0;  // pixels
    double background = 0.1;
    double noise = 0.05;
    double margin = 0.15;  // blob centers lie in [margin, 1 - margin]^2
};

ImageBuffer render_blob(const BlobSpec& spec, const GazePoint& center, Rng& rng);
std::vector<gaze::GazeExample> blob_dataset(int n, const BlobSpec& spec, std::uint64_t seed);

// Smooth colour gradients with a few discs, 288 x 288.
std::vector<ImageBuffer> toy_images(int n, std::uint64_t seed);

/// Point agent steered toward a target that appears as a small dot, with a
/// scripted gaze that looks `lookahead` steps ahead along the agent's path.
struct ScriptedSpec {
    int steps = 30;
    double gain = 0.15;
    double max_speed = 0.03;
    int lookahead = 6;
    int agent_half = 4;   // pixels
    int dot_radius = 2;   // pixels
    double background = 0.1;
    double noise = 0.05;
};

struct ScriptedEpisode {
    GazePoint target;
    Mat positions;  // T x 2
    Mat actions;    // T x 2, velocity applied at each step in units of max_speed
    Mat gaze;       // T x 2
    std::vector<ImageBuffer> images;
};

ScriptedEpisode make_scripted_episode(const ScriptedSpec& spec, Rng& rng);
ImageBuffer render_scene(const ScriptedSpec& spec, const RowVec& agent, const GazePoint& target, Rng& rng);

enum class Variant { Fine, Coarse, FovAct, FovUnet };
std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);
fovea::PatternKind pattern_of(Variant v);

// Proprio layout: [agent x, agent y] plus [gaze x, gaze y] for the foveated
// variants. FovAct chunks append the next K gaze points as two extra columns.
// With fixation_noise > 0 every FovAct frame gets a second sample whose input
// fixation is perturbed by N(0, fixation_noise^2) while the labels stay fixed.
std::vector<policy::PolicySample> scripted_samples(const std::vector<ScriptedEpisode>& episodes, Variant variant,
                                                   int chunk_size, double fixation_noise = 0.0,
                                                   std::uint64_t seed = 0);

std::vector<ScriptedEpisode> scripted_episodes(int count, const ScriptedSpec& spec, std::uint64_t seed);

struct ScriptedRunOptions {
    int chunk_size = 4;
    int steps = 300;
    int batch = 16;
    double lr = 1e-3;
    int dim = 32;
    int heads = 4;
    int encoder_depth = 1;
    int policy_depth = 2;
    int flow_steps = 8;
    int gaze_steps = 300;  // FovUnet predictor budget
    double fixation_noise = 0.15;  // FovAct input-fixation perturbation
    std::uint64_t seed = 0;
};

struct VariantReport {
    Variant variant = Variant::Fine;
    int tokens = 0;
    double final_loss = 0.0;     // mean of the last 10% of steps
    double action_error = 0.0;   // first chunk row vs scripted action, units of max_speed
    double gaze_error = std::numeric_limits<double>::quiet_NaN();
    double fovea_hit_rate = std::numeric_limits<double>::quiet_NaN();  // target dot inside the fovea
    double seconds = 0.0;
    std::vector<double> losses;
};

/// Trains one variant on `train` and evaluates on `eval`. FovUnet first trains
/// a gaze predictor on the training frames; FovAct rolls each evaluation
/// episode through gaze_as_action_step and scores the predicted next gaze.
VariantReport run_scripted_variant(Variant variant, const std::vector<ScriptedEpisode>& train,
                                   const std::vector<ScriptedEpisode>& eval, const ScriptedRunOptions& options,
                                   const policy::StepCallback& on_step = {});

}  // namespace gazevit::tasks
