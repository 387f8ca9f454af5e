#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gazevit/fovea.hpp"
#include "gazevit/policy.hpp"

namespace gazevit::gaze {

using nn::ParamStore;
using nn::Rng;
using nn::Tape;
using nn::Var;

/// Logit grid whose cell (i, j) has center ((j + 0.5) / w, (i + 0.5) / h).
struct Heatmap {
    Mat values;  // h x w
    int height() const { return static_cast<int>(values.rows()); }
    int width() const { return static_cast<int>(values.cols()); }
};

GazePoint spatial_softmax(const Heatmap& map, double temperature = 1.0);
// Differentiable form: logits B x (h*w), row-major cells -> B x 2 keypoints.
Var spatial_softmax(Var logits, int h, int w, double temperature = 1.0);
// (h*w) x 2 cell centers in row-major order.
Mat cell_centers(int h, int w);

struct GazePredictorConfig {
    int image_width = 288;
    int image_height = 288;
    int input_downscale = 4;
    int enc1 = 8;   // channels at input resolution
    int enc2 = 8;   // after the first pool (heatmap resolution)
    int enc3 = 16;  // after the second pool
    int dec = 8;
    double temperature = 1.0;
    bool position_bias = false;  // learned per-cell logit offset
    std::uint64_t seed = 0;

    int input_width() const { return image_width / input_downscale; }
    int input_height() const { return image_height / input_downscale; }
    int grid_width() const { return input_width() / 2; }
    int grid_height() const { return input_height() / 2; }
    void validate() const;
};

/// Three-level convolutional encoder-decoder producing a heatmap at half the
/// downscaled input resolution, read out by a spatial softmax.
class GazePredictor {
public:
    explicit GazePredictor(const GazePredictorConfig& config);
    GazePredictor(GazePredictor&&) = default;

    // Area-downscaled input, (h*w) x 3 in row-major pixel order.
    Mat prepare(const ImageBuffer& image) const;

    // inputs: stacked prepared images; returns B x (h*w) logits.
    Var logits(Tape& tape, const Mat& inputs, int batch) const;
    Heatmap heatmap(const ImageBuffer& image) const;
    GazePoint predict(const ImageBuffer& image) const;

    const GazePredictorConfig& config() const { return config_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

private:
    GazePredictorConfig config_;
    ParamStore store_;
    nn::Linear conv1_, conv2_, conv3_, conv4_, head_;
    ad::Param* bias_map_ = nullptr;
};

struct GazeTrainOptions {
    int steps = 600;
    int batch = 16;
    double lr = 3e-3;
    std::uint64_t seed = 0;
};

struct GazeExample {
    ImageBuffer image;
    GazePoint gaze;
};

// MSE between the spatial-softmax keypoint and the label; returns per-step losses.
std::vector<double> train_gaze_predictor(GazePredictor& predictor, const std::vector<GazeExample>& data,
                                         const GazeTrainOptions& options);

// Mean Euclidean distance in normalized units.
double mean_gaze_error(const GazePredictor& predictor, const std::vector<GazeExample>& data);

// True when `point` lands in the full-resolution level-0 block after
// foveating a 288 x 288 image at `fixation`.
bool inside_fovea(const GazePoint& fixation, const GazePoint& point);
// Fraction of examples whose label lies inside the fovea placed at the prediction.
double fovea_hit_rate(const GazePredictor& predictor, const std::vector<GazeExample>& data);

GazePoint merge_gaze(const GazePoint& left, const GazePoint& right);

class GazeHistory {
public:
    const GazePoint& last() const { return last_; }
    bool initialized() const { return initialized_; }
    void update(const GazePoint& gaze) {
        last_ = gaze;
        initialized_ = true;
    }
    void reset() { *this = GazeHistory{}; }

private:
    GazePoint last_{0.5, 0.5};
    bool initialized_ = false;
};

/// Result shared by both control-loop variants.
struct GazeStep {
    GazePoint gaze;                       // point used for foveation
    std::vector<GazePoint> trajectory;    // predicted gaze, one per chunk row (two-stage: one entry)
    policy::ActionChunk chunk;            // K x D (two-stage) or K x (D+2) (gaze-as-action)
    fovea::TokenizedImage tokens;
};

// Proprio fed to the policy: [joints, gaze.x, gaze.y].
RowVec append_gaze(const RowVec& proprio, const GazePoint& gaze);

GazeStep two_stage_step(const ImageBuffer& image, const RowVec& proprio, const GazePredictor& predictor,
                        const policy::FlowPolicy& policy, std::uint64_t seed);

// The last two chunk columns are gaze; the first predicted gaze becomes the new history.
GazeStep gaze_as_action_step(const ImageBuffer& image, const RowVec& proprio, GazeHistory& history,
                             const policy::FlowPolicy& policy, std::uint64_t seed);

enum class GazeSource { Human, Unet, Policy };
std::string_view to_string(GazeSource source);

struct GazeLogRow {
    long frame_id = 0;
    GazePoint gaze;
    GazeSource source = GazeSource::Human;
};

void write_gaze_csv(const std::vector<GazeLogRow>& rows, const std::filesystem::path& path);
std::vector<GazeLogRow> read_gaze_csv(const std::filesystem::path& path);

// Softmax probabilities rescaled to [0,1], grayscale, `scale` pixels per cell.
void write_heatmap_png(const Heatmap& map, const std::filesystem::path& path, double temperature = 1.0,
                       int scale = 8);

}  // namespace gazevit::gaze
