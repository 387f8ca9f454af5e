#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gazevit/encoder.hpp"

namespace gazevit::policy {

using nn::ParamStore;
using nn::Rng;
using nn::Segments;
using nn::Tape;
using nn::Var;

struct PolicyConfig {
    // Architecture.
    int chunk_size = 16;  // K
    int action_dim = 2;   // D, including gaze columns when present
    int proprio_dim = 2;
    int dim = 64;
    int heads = 4;
    int depth = 2;
    double mlp_ratio = 4.0;
    int time_features = 64;
    bool use_image = false;
    fovea::PatternKind pattern = fovea::PatternKind::Foveated;
    encoder::EncoderConfig encoder = encoder::EncoderConfig::desk(fovea::PatternKind::Foveated);
    int n_queries = 16;

    // Inference.
    int flow_steps = 8;
    double ensemble_m = 0.01;

    // Training.
    double lr = 1e-4;
    std::string schedule = "cosine";  // or "constant"
    int steps = 30000;
    int batch = 64;
    double ema_decay = 0.99;
    double proprio_dropout = 0.1;  // probability of zeroing a sample's whole proprio vector
    double grad_clip = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ActionChunk {
    Mat actions;  // K x D
    int length() const { return static_cast<int>(actions.rows()); }
    int dim() const { return static_cast<int>(actions.cols()); }
};

/// Encoded observation: image condition tokens and the raw joint-state vector.
struct Observation {
    Mat c_img;  // m x dim (m = 16 with an image encoder)
    RowVec proprio;
};

struct FlowState {
    Mat z;  // K x D
    double t = 0.0;
    Mat z0;
};

// z_t = (1 - t) z0 + t A
Mat flow_interpolate(const Mat& z0, const Mat& actions, double t);

// (gamma + 1) * LN(x) + beta with per-channel gamma, beta.
Mat adaln_modulate(const Mat& x, const RowVec& gamma, const RowVec& beta);
Var adaln(Var x, Var gamma, Var beta);  // gamma, beta already expanded to x's shape

RowVec timestep_features(double t, int features);

/// DiT-style velocity field over K action-latent tokens plus one proprio
/// token. Every block modulates its three sub-layers with AdaLN-Zero driven
/// by the time embedding and cross-attends to the image tokens.
class VelocityNet {
public:
    VelocityNet(ParamStore& store, const std::string& prefix, const PolicyConfig& config, Rng& rng);

    // z: (B*K) x D, t: B values, c_img: rows grouped by img_segments,
    // proprio: B x proprio_dim (raw, before the proprio MLP).
    Var operator()(Tape& tape, Var z, std::span<const double> t, Var c_img, const Segments& img_segments,
                   Var proprio) const;

    // [shift, scale, gate] x [self-attn, cross-attn, mlp] for one block, 1 x 9*dim.
    Mat block_modulation(int block, double t) const;
    int depth() const { return static_cast<int>(blocks_.size()); }

private:
    Var time_embedding(Tape& tape, std::span<const double> t) const;

    PolicyConfig config_;
    nn::Linear in_proj_;
    ad::Param* action_pos_ = nullptr;
    encoder::ProprioEncoder proprio_;
    nn::Linear time_fc1_, time_fc2_;
    struct Block {
        nn::Linear modulation;  // zero-initialized
        nn::MultiHeadAttention self_attn;
        nn::MultiHeadAttention cross_attn;
        nn::Mlp mlp;
    };
    std::vector<Block> blocks_;
    nn::Linear final_modulation_;  // zero-initialized
    nn::Linear out_proj_;          // zero-initialized
};

struct PolicySample {
    std::optional<fovea::TokenizedImage> image;
    RowVec proprio;
    Mat actions;  // K x D
};

/// Observation encoder (optional) plus velocity network, owning the parameters.
class FlowPolicy {
public:
    explicit FlowPolicy(const PolicyConfig& config);
    FlowPolicy(FlowPolicy&&) = default;

    const PolicyConfig& config() const { return config_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const VelocityNet& net() const { return *net_; }

    Observation encode(const fovea::TokenizedImage* image, const RowVec& proprio) const;

    // Records c_img for a batch; a single zero token per sample without an image encoder.
    Var encode_images(Tape& tape, std::span<const fovea::TokenizedImage* const> images, int batch,
                      Segments& segments) const;

    // Batched velocity on already-encoded observations.
    Mat velocity(const Mat& z, std::span<const double> t, std::span<const Observation> obs) const;

private:
    PolicyConfig config_;
    ParamStore store_;
    std::unique_ptr<encoder::ObservationEncoder> encoder_;
    std::unique_ptr<VelocityNet> net_;
};

// dit_forward: predicted velocity, K x D.
Mat dit_forward(const FlowPolicy& policy, const FlowState& state, const Observation& obs);

struct CfmLoss {
    double loss = 0.0;
    Mat target;  // A - z0
    Mat z_t;
};

// Mean squared error between v(z_t, t, O) and A - z0. Adds the gradient into
// the policy's Param::grad when accumulate is set.
CfmLoss cfm_loss(FlowPolicy& policy, const Mat& actions, const Observation& obs, double t, const Mat& z0,
                 bool accumulate = false);

/// Forward Euler from a standard-normal draw: z += v(z, i/steps) / steps.
ActionChunk euler_sample(const FlowPolicy& policy, const Observation& obs, int steps, std::uint64_t seed);
// Same integrator with an explicit initial draw.
ActionChunk euler_integrate(const FlowPolicy& policy, const Observation& obs, int steps, Mat z0);
// One chunk per observation, integrated together.
std::vector<ActionChunk> euler_sample_batch(const FlowPolicy& policy, std::span<const Observation> obs,
                                            int steps, Rng& rng);
// Generic integrator used by the constant-field checks.
Mat euler_integrate_field(const std::function<Mat(const Mat&, double)>& velocity, Mat z0, int steps);

/// Previously emitted chunks for ensembling at the current control step.
class EnsembleBuffer {
public:
    explicit EnsembleBuffer(double m = 0.01) : m_(m) {}

    void add(long emitted_at, Mat chunk);
    // Weighted mean over every chunk covering `now`, weight exp(-m * age).
    RowVec action(long now);
    std::size_t live() const { return chunks_.size(); }
    double m() const { return m_; }

private:
    struct Entry {
        long emitted_at;
        Mat chunk;
    };
    double m_;
    std::deque<Entry> chunks_;
};

RowVec temporal_ensemble(EnsembleBuffer& buffer, long now);

struct TrainResult {
    std::vector<double> losses;
    std::vector<double> learning_rates;
};

using StepCallback = std::function<void(int step, double loss)>;

/// Minibatch Adam on the CFM objective with t ~ U[0,1], per-sample proprio
/// dropout, gradient clipping, the configured schedule and a parameter EMA.
/// On return the policy holds the EMA weights.
TrainResult train_policy(FlowPolicy& policy, const std::vector<PolicySample>& data,
                         const StepCallback& on_step = {});

}  // namespace gazevit::policy
