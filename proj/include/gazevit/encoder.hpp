#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gazevit/fovea.hpp"
#include "gazevit/nn.hpp"

namespace gazevit::encoder {

using nn::ParamStore;
using nn::Rng;
using nn::Segments;
using nn::Tape;
using nn::Var;

struct EncoderConfig {
    int depth = 2;
    int dim = 64;
    int heads = 4;
    double mlp_ratio = 4.0;
    int embed_input = 768;  // values per token
    int n_tokens = 20;      // positional table size

    int mlp_hidden() const { return static_cast<int>(mlp_ratio * dim); }
    void validate() const;

    // depth 2, width 64, 4 heads.
    static EncoderConfig desk(fovea::PatternKind kind);
    // ViT-B: depth 12, width 768, 12 heads, MLP ratio 4.
    static EncoderConfig vit_b(fovea::PatternKind kind);
    static EncoderConfig for_pattern(fovea::PatternKind kind, int depth, int dim, int heads);
};

struct TokenSequence {
    Mat tokens;  // n x dim
    fovea::PatternKind provenance = fovea::PatternKind::Foveated;
    std::size_t size() const { return static_cast<std::size_t>(tokens.rows()); }
};

struct ConditionTokens {
    Mat c_img;         // 16 x dim
    RowVec c_proprio;  // 1 x dim
};

/// Pre-norm transformer blocks (self-attention and MLP, each residual).
class TransformerStack {
public:
    TransformerStack() = default;
    TransformerStack(ParamStore& store, const std::string& prefix, int depth, int dim, int heads,
                     int mlp_hidden, Rng& rng);

    Var operator()(Tape& tape, Var x, const Segments& segments) const;
    int depth() const { return static_cast<int>(blocks_.size()); }

private:
    struct Block {
        nn::LayerNorm ln1;
        nn::MultiHeadAttention attn;
        nn::LayerNorm ln2;
        nn::Mlp mlp;
    };
    std::vector<Block> blocks_;
};

class VisionTransformer {
public:
    VisionTransformer(ParamStore& store, const std::string& prefix, const EncoderConfig& config, Rng& rng);

    // Linear projection of each pixel row plus the positional row of its slot.
    Var embed(Tape& tape, const Mat& pixels, const std::vector<int>& slots) const;
    Var blocks(Tape& tape, Var x, const Segments& segments) const { return stack_(tape, x, segments); }

    const EncoderConfig& config() const { return config_; }

private:
    EncoderConfig config_;
    nn::Linear proj_;
    ad::Param* pos_ = nullptr;
    TransformerStack stack_;
};

TokenSequence patch_embed(const VisionTransformer& vit, const fovea::TokenizedImage& tokens);
// Embeds arbitrary pixel rows at explicit slots (slot = index into the pattern).
TokenSequence patch_embed_rows(const VisionTransformer& vit, const Mat& pixels,
                               const std::vector<int>& slots, fovea::PatternKind kind);
TokenSequence vit_forward(const VisionTransformer& vit, const TokenSequence& seq);

/// Learned queries that cross-attend to a token sequence.
class QFormer {
public:
    QFormer(ParamStore& store, const std::string& prefix, int dim, int heads, Rng& rng,
            int n_queries = 16, int depth = 1);

    // Returns (segments * n_queries) x dim.
    Var operator()(Tape& tape, Var seq, const Segments& segments) const;
    int n_queries() const { return n_queries_; }
    const nn::MultiHeadAttention& cross_attention(int block) const { return blocks_[block].cross; }

private:
    struct Block {
        nn::LayerNorm ln_q, ln_kv;
        nn::MultiHeadAttention cross;
        nn::LayerNorm ln2;
        nn::Mlp mlp;
    };
    ad::Param* queries_ = nullptr;
    int n_queries_;
    std::vector<Block> blocks_;
    nn::LayerNorm out_norm_;
};

Mat qformer(const QFormer& q, const TokenSequence& seq);

/// Joint-state MLP producing the single c_proprio token.
class ProprioEncoder {
public:
    ProprioEncoder(ParamStore& store, const std::string& prefix, int proprio_dim, int dim, Rng& rng);
    Var operator()(Tape& tape, Var proprio) const;  // B x proprio_dim -> B x dim
    int input_dim() const { return fc1_.in(); }

private:
    nn::Linear fc1_, fc2_;
};

/// Tokenized image -> ViT -> Q-Former.
class ObservationEncoder {
public:
    ObservationEncoder(ParamStore& store, const std::string& prefix, const EncoderConfig& config,
                       Rng& rng, int n_queries = 16);

    // Returns (batch * n_queries) x dim.
    Var operator()(Tape& tape, std::span<const fovea::TokenizedImage* const> batch) const;
    const EncoderConfig& config() const { return vit_.config(); }
    int n_queries() const { return qformer_.n_queries(); }
    const VisionTransformer& vit() const { return vit_; }

private:
    VisionTransformer vit_;
    QFormer qformer_;
};

struct MaskPlan {
    double mask_ratio = 0.0;
    std::vector<int> visible;  // ascending
    std::vector<int> masked;   // ascending
    std::size_t size() const { return visible.size() + masked.size(); }
};

// round(mask_ratio * n) indices chosen uniformly at random.
MaskPlan mae_mask(int n, double mask_ratio, std::uint64_t seed);

struct MaeResult {
    Mat reconstruction;  // n x token_values
    Mat encoded;         // visible x encoder dim
    double loss = 0.0;   // MSE over masked tokens, 0 when none are masked
};

/// Encoder over visible tokens, decoder over the full sequence with a
/// learned mask token in masked slots, pixel regression head.
class MaeModel {
public:
    MaeModel(const fovea::TokenizationPattern& pattern, const EncoderConfig& encoder,
             const EncoderConfig& decoder, std::uint64_t seed);
    MaeModel(MaeModel&&) = default;

    Var loss(Tape& tape, std::span<const fovea::TokenizedImage* const> batch,
             std::span<const MaskPlan> plans, Var* reconstruction = nullptr) const;
    MaeResult reconstruct(const fovea::TokenizedImage& tokens, const MaskPlan& plan) const;

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const fovea::TokenizationPattern& pattern() const { return pattern_; }

private:
    void check(const fovea::TokenizedImage& tokens, const MaskPlan& plan) const;

    fovea::TokenizationPattern pattern_;
    EncoderConfig enc_cfg_, dec_cfg_;
    ParamStore store_;
    std::unique_ptr<VisionTransformer> encoder_;
    nn::Linear enc_to_dec_;
    ad::Param* mask_token_ = nullptr;
    ad::Param* dec_pos_ = nullptr;
    TransformerStack decoder_;
    nn::LayerNorm dec_norm_;
    nn::Linear head_;
};

MaeResult mae_reconstruct(const MaeModel& model, const fovea::TokenizedImage& tokens, const MaskPlan& plan);

struct MaeTrainOptions {
    int steps = 200;
    int batch = 8;
    double lr = 1e-3;
    double mask_ratio = 0.75;
    std::uint64_t seed = 0;
};

// Adam with a fresh mask per image per step; returns per-step losses.
std::vector<double> train_mae(MaeModel& model, const std::vector<fovea::TokenizedImage>& images,
                              const MaeTrainOptions& options);

struct FlopsReport {
    double patch_embed_macs = 0;
    double attention_macs = 0;        // projections + scores/weighted sum
    double attention_score_macs = 0;  // the n^2 part of attention_macs
    double mlp_macs = 0;
    double total_macs = 0;  // per sample
    long batch = 1;
    double gflops = 0;  // total_macs * batch / 1e9, one MAC counted as one FLOP
};

FlopsReport count_flops(const EncoderConfig& config, long n_tokens, long embed_input, long batch);

}  // namespace gazevit::encoder
