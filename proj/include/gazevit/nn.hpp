#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gazevit/autodiff.hpp"

namespace gazevit::nn {

using ad::Param;
using ad::Segments;
using ad::Tape;
using ad::Var;
using Rng = std::mt19937_64;

/// Named parameters with stable addresses, in registration order.
class ParamStore {
public:
    ParamStore() = default;
    ParamStore(ParamStore&&) = default;
    ParamStore& operator=(ParamStore&&) = default;

    Param& add(std::string name, Mat init);
    Param& get(const std::string& name);
    const Param& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;
    Param& operator[](std::size_t i) { return *params_[i]; }
    const Param& operator[](std::size_t i) const { return *params_[i]; }

    void zero_grad();
    // Copies values by name; names and shapes must match.
    void assign_values(const ParamStore& other);

private:
    std::vector<std::unique_ptr<Param>> params_;
};

// Truncated at two standard deviations.
Mat trunc_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);
Mat standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng);

struct Linear {
    Param* weight = nullptr;  // in x out
    Param* bias = nullptr;    // 1 x out

    Linear() = default;
    Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
           bool zero_init = false);
    Var operator()(Tape& tape, Var x) const;
    int in() const { return static_cast<int>(weight->value.rows()); }
    int out() const { return static_cast<int>(weight->value.cols()); }
};

struct LayerNorm {
    Param* gamma = nullptr;
    Param* beta = nullptr;

    LayerNorm() = default;
    LayerNorm(ParamStore& store, const std::string& name, int dim);
    Var operator()(Tape& tape, Var x) const;
};

struct Mlp {
    Linear fc1, fc2;

    Mlp() = default;
    Mlp(ParamStore& store, const std::string& name, int dim, int hidden, Rng& rng);
    Var operator()(Tape& tape, Var x) const;
};

/// Projections around ad::attention. Self-attention passes the same input
/// and segments twice.
struct MultiHeadAttention {
    Linear q, k, v, o;
    int heads = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore& store, const std::string& name, int dim, int heads, Rng& rng);
    Var operator()(Tape& tape, Var queries, Var keys, const Segments& q_segments,
                   const Segments& kv_segments) const;
};

// Row i of the result is row index[i] of `rows`; used to broadcast per-sample
// vectors over that sample's tokens.
std::vector<int> segment_row_index(const Segments& segments);

class Adam {
public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
    };

    explicit Adam(const ParamStore& store);
    Adam(const ParamStore& store, Options opts);
    void step(ParamStore& store, double lr);

private:
    Options opts_;
    std::vector<Mat> m_, v_;
    long t_ = 0;
};

// Scales all gradients so the global norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(ParamStore& store, double max_norm);

/// Exponential moving average of parameter values.
class Ema {
public:
    Ema(const ParamStore& store, double decay);
    void update(const ParamStore& store);
    void copy_to(ParamStore& store) const;
    const Mat& shadow(std::size_t i) const { return shadow_[i]; }
    double decay() const { return decay_; }

private:
    double decay_;
    std::vector<Mat> shadow_;
};

// base * 0.5 * (1 + cos(pi * step / total)); reaches 0 at step == total.
double cosine_lr(double base, long step, long total);

// Named-tensor checkpoint, see docs/FORMATS.md.
void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);
void load_checkpoint(ParamStore& store, const std::filesystem::path& path);

}  // namespace gazevit::nn
