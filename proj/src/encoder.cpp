#include "gazevit/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gazevit/errors.hpp"

namespace gazevit::encoder {

void EncoderConfig::validate() const {
    if (depth < 0 || dim <= 0 || heads <= 0 || mlp_ratio <= 0 || embed_input <= 0 || n_tokens <= 0)
        throw InvalidInput("encoder config entries must be positive");
    if (dim % heads != 0) throw InvalidInput("encoder width must be divisible by the head count");
}

EncoderConfig EncoderConfig::for_pattern(fovea::PatternKind kind, int depth, int dim, int heads) {
    const auto pattern = fovea::build_pattern(kind);
    EncoderConfig c;
    c.depth = depth;
    c.dim = dim;
    c.heads = heads;
    c.mlp_ratio = 4.0;
    c.embed_input = pattern.token_values();
    c.n_tokens = static_cast<int>(pattern.token_count());
    return c;
}

EncoderConfig EncoderConfig::desk(fovea::PatternKind kind) { return for_pattern(kind, 2, 64, 4); }
EncoderConfig EncoderConfig::vit_b(fovea::PatternKind kind) { return for_pattern(kind, 12, 768, 12); }

TransformerStack::TransformerStack(ParamStore& store, const std::string& prefix, int depth, int dim,
                                   int heads, int mlp_hidden, Rng& rng) {
    for (int i = 0; i < depth; ++i) {
        const std::string p = prefix + ".block" + std::to_string(i);
        blocks_.push_back({nn::LayerNorm(store, p + ".ln1", dim),
                           nn::MultiHeadAttention(store, p + ".attn", dim, heads, rng),
                           nn::LayerNorm(store, p + ".ln2", dim),
                           nn::Mlp(store, p + ".mlp", dim, mlp_hidden, rng)});
    }
}

Var TransformerStack::operator()(Tape& tape, Var x, const Segments& segments) const {
    for (const Block& b : blocks_) {
        Var h = b.ln1(tape, x);
        x = x + b.attn(tape, h, h, segments, segments);
        x = x + b.mlp(tape, b.ln2(tape, x));
    }
    return x;
}

VisionTransformer::VisionTransformer(ParamStore& store, const std::string& prefix,
                                     const EncoderConfig& config, Rng& rng)
    : config_(config) {
    config.validate();
    proj_ = nn::Linear(store, prefix + ".patch_embed", config.embed_input, config.dim, rng);
    pos_ = &store.add(prefix + ".pos_embed", nn::trunc_normal(config.n_tokens, config.dim, 0.02, rng));
    stack_ = TransformerStack(store, prefix, config.depth, config.dim, config.heads, config.mlp_hidden(), rng);
}

Var VisionTransformer::embed(Tape& tape, const Mat& pixels, const std::vector<int>& slots) const {
    if (pixels.cols() != config_.embed_input)
        throw InvalidInput("token blocks have " + std::to_string(pixels.cols()) + " values, encoder expects " +
                           std::to_string(config_.embed_input));
    if (static_cast<Eigen::Index>(slots.size()) != pixels.rows())
        throw InvalidInput("one positional slot per token row is required");
    for (int s : slots)
        if (s < 0 || s >= config_.n_tokens) throw InvalidInput("positional slot out of range");
    Var x = proj_(tape, tape.constant(pixels));
    return x + ad::gather_rows(tape.param(*pos_), slots);
}

TokenSequence patch_embed_rows(const VisionTransformer& vit, const Mat& pixels,
                               const std::vector<int>& slots, fovea::PatternKind kind) {
    Tape tape(false);
    return {vit.embed(tape, pixels, slots).value(), kind};
}

TokenSequence patch_embed(const VisionTransformer& vit, const fovea::TokenizedImage& tokens) {
    std::vector<int> slots(static_cast<std::size_t>(tokens.tokens.rows()));
    std::iota(slots.begin(), slots.end(), 0);
    return patch_embed_rows(vit, tokens.tokens, slots, tokens.pattern.kind);
}

TokenSequence vit_forward(const VisionTransformer& vit, const TokenSequence& seq) {
    if (seq.tokens.cols() != vit.config().dim) throw InvalidInput("sequence width does not match encoder width");
    if (!seq.tokens.allFinite()) throw InvalidInput("non-finite encoder input");
    Tape tape(false);
    Var x = tape.constant(seq.tokens);
    return {vit.blocks(tape, x, Segments::uniform(1, static_cast<int>(seq.tokens.rows()))).value(), seq.provenance};
}

QFormer::QFormer(ParamStore& store, const std::string& prefix, int dim, int heads, Rng& rng, int n_queries,
                 int depth)
    : n_queries_(n_queries) {
    queries_ = &store.add(prefix + ".queries", nn::trunc_normal(n_queries, dim, 0.02, rng));
    for (int i = 0; i < depth; ++i) {
        const std::string p = prefix + ".block" + std::to_string(i);
        blocks_.push_back({nn::LayerNorm(store, p + ".ln_q", dim), nn::LayerNorm(store, p + ".ln_kv", dim),
                           nn::MultiHeadAttention(store, p + ".cross", dim, heads, rng),
                           nn::LayerNorm(store, p + ".ln2", dim), nn::Mlp(store, p + ".mlp", dim, 4 * dim, rng)});
    }
    out_norm_ = nn::LayerNorm(store, prefix + ".out_norm", dim);
}

Var QFormer::operator()(Tape& tape, Var seq, const Segments& segments) const {
    const int batch = segments.count();
    for (int s = 0; s < batch; ++s)
        if (segments.length(s) == 0) throw InvalidInput("Q-Former input sequence is empty");
    std::vector<int> tile(static_cast<std::size_t>(batch) * n_queries_);
    for (std::size_t i = 0; i < tile.size(); ++i) tile[i] = static_cast<int>(i % n_queries_);
    Var q = ad::gather_rows(tape.param(*queries_), std::move(tile));
    const Segments qs = Segments::uniform(batch, n_queries_);
    for (const Block& b : blocks_) {
        Var kv = b.ln_kv(tape, seq);
        q = q + b.cross(tape, b.ln_q(tape, q), kv, qs, segments);
        q = q + b.mlp(tape, b.ln2(tape, q));
    }
    return out_norm_(tape, q);
}

Mat qformer(const QFormer& q, const TokenSequence& seq) {
    if (seq.tokens.rows() == 0) throw InvalidInput("Q-Former input sequence is empty");
    Tape tape(false);
    return q(tape, tape.constant(seq.tokens), Segments::uniform(1, static_cast<int>(seq.tokens.rows()))).value();
}

ProprioEncoder::ProprioEncoder(ParamStore& store, const std::string& prefix, int proprio_dim, int dim, Rng& rng)
    : fc1_(store, prefix + ".fc1", proprio_dim, dim, rng), fc2_(store, prefix + ".fc2", dim, dim, rng) {}

Var ProprioEncoder::operator()(Tape& tape, Var proprio) const {
    return fc2_(tape, ad::gelu(fc1_(tape, proprio)));
}

ObservationEncoder::ObservationEncoder(ParamStore& store, const std::string& prefix, const EncoderConfig& config,
                                       Rng& rng, int n_queries)
    : vit_(store, prefix + ".vit", config, rng),
      qformer_(store, prefix + ".qformer", config.dim, config.heads, rng, n_queries) {}

Var ObservationEncoder::operator()(Tape& tape, std::span<const fovea::TokenizedImage* const> batch) const {
    const int n = vit_.config().n_tokens;
    Mat pixels(static_cast<Eigen::Index>(batch.size()) * n, vit_.config().embed_input);
    std::vector<int> slots(static_cast<std::size_t>(pixels.rows()));
    for (std::size_t b = 0; b < batch.size(); ++b) {
        if (batch[b]->tokens.rows() != n) throw InvalidInput("observation token count does not match encoder");
        pixels.middleRows(static_cast<Eigen::Index>(b) * n, n) = batch[b]->tokens;
        for (int i = 0; i < n; ++i) slots[b * n + i] = i;
    }
    const Segments segs = Segments::uniform(static_cast<int>(batch.size()), n);
    Var x = vit_.blocks(tape, vit_.embed(tape, pixels, slots), segs);
    return qformer_(tape, x, segs);
}

MaskPlan mae_mask(int n, double mask_ratio, std::uint64_t seed) {
    if (n < 0) throw InvalidInput("token count must be nonnegative");
    if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw InvalidInput("mask ratio must lie in [0,1)");
    MaskPlan plan;
    plan.mask_ratio = mask_ratio;
    const int n_masked = static_cast<int>(std::lround(mask_ratio * n));
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    // Fisher-Yates with an explicit draw so results do not depend on the
    // standard library's shuffle.
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(order[i], order[j]);
    }
    plan.masked.assign(order.begin(), order.begin() + n_masked);
    plan.visible.assign(order.begin() + n_masked, order.end());
    std::sort(plan.masked.begin(), plan.masked.end());
    std::sort(plan.visible.begin(), plan.visible.end());
    return plan;
}

MaeModel::MaeModel(const fovea::TokenizationPattern& pattern, const EncoderConfig& encoder,
                   const EncoderConfig& decoder, std::uint64_t seed)
    : pattern_(pattern), enc_cfg_(encoder), dec_cfg_(decoder) {
    const int n = static_cast<int>(pattern.token_count());
    if (encoder.n_tokens != n || encoder.embed_input != pattern.token_values())
        throw InvalidInput("encoder config does not match the tokenization pattern");
    decoder.validate();
    Rng rng(seed);
    encoder_ = std::make_unique<VisionTransformer>(store_, "encoder", encoder, rng);
    enc_to_dec_ = nn::Linear(store_, "decoder.embed", encoder.dim, decoder.dim, rng);
    mask_token_ = &store_.add("decoder.mask_token", nn::trunc_normal(1, decoder.dim, 0.02, rng));
    dec_pos_ = &store_.add("decoder.pos_embed", nn::trunc_normal(n, decoder.dim, 0.02, rng));
    decoder_ = TransformerStack(store_, "decoder", decoder.depth, decoder.dim, decoder.heads, decoder.mlp_hidden(), rng);
    dec_norm_ = nn::LayerNorm(store_, "decoder.norm", decoder.dim);
    head_ = nn::Linear(store_, "decoder.head", decoder.dim, pattern.token_values(), rng);
}

void MaeModel::check(const fovea::TokenizedImage& tokens, const MaskPlan& plan) const {
    const auto n = static_cast<std::size_t>(pattern_.token_count());
    if (tokens.tokens.rows() != static_cast<Eigen::Index>(n) || tokens.tokens.cols() != pattern_.token_values())
        throw InvalidInput("tokens do not match the model's pattern");
    if (plan.size() != n) throw InvalidInput("mask plan does not cover the token sequence");
    std::vector<char> seen(n, 0);
    for (int i : plan.visible) {
        if (i < 0 || static_cast<std::size_t>(i) >= n || seen[i]) throw InvalidInput("inconsistent mask plan");
        seen[i] = 1;
    }
    for (int i : plan.masked) {
        if (i < 0 || static_cast<std::size_t>(i) >= n || seen[i]) throw InvalidInput("inconsistent mask plan");
        seen[i] = 1;
    }
    if (plan.visible.empty()) throw InvalidInput("mask plan leaves no visible tokens");
}

Var MaeModel::loss(Tape& tape, std::span<const fovea::TokenizedImage* const> batch,
                   std::span<const MaskPlan> plans, Var* reconstruction) const {
    if (batch.size() != plans.size() || batch.empty()) throw InvalidInput("one mask plan per image is required");
    const int n = static_cast<int>(pattern_.token_count());
    const int values = pattern_.token_values();

    // Only visible pixel rows are copied into the encoder input.
    Eigen::Index n_vis = 0, n_mask = 0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        check(*batch[b], plans[b]);
        n_vis += static_cast<Eigen::Index>(plans[b].visible.size());
        n_mask += static_cast<Eigen::Index>(plans[b].masked.size());
    }
    Mat visible_pixels(n_vis, values);
    std::vector<int> slots;
    Segments vis_segs;
    Eigen::Index r = 0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        for (int i : plans[b].visible) {
            visible_pixels.row(r++) = batch[b]->tokens.row(i);
            slots.push_back(i);
        }
        vis_segs.offsets.push_back(static_cast<int>(r));
    }
    Var enc = encoder_->blocks(tape, encoder_->embed(tape, visible_pixels, slots), vis_segs);
    Var dec_in = enc_to_dec_(tape, enc);

    // Full-length decoder sequence: visible rows in place, mask token elsewhere.
    const int mask_row = static_cast<int>(n_vis);
    std::vector<int> fill(static_cast<std::size_t>(batch.size()) * n, mask_row);
    std::vector<int> pos(fill.size());
    int vis_base = 0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        for (std::size_t j = 0; j < plans[b].visible.size(); ++j)
            fill[b * n + plans[b].visible[j]] = vis_base + static_cast<int>(j);
        for (int i = 0; i < n; ++i) pos[b * n + i] = i;
        vis_base += static_cast<int>(plans[b].visible.size());
    }
    Var rows[] = {dec_in, tape.param(*mask_token_)};
    Var seq = ad::gather_rows(ad::concat_rows(rows), std::move(fill));
    seq = seq + ad::gather_rows(tape.param(*dec_pos_), std::move(pos));
    seq = decoder_(tape, seq, Segments::uniform(static_cast<int>(batch.size()), n));
    Var pred = head_(tape, dec_norm_(tape, seq));
    if (reconstruction) *reconstruction = pred;

    if (n_mask == 0) return tape.constant(Mat::Zero(1, 1));
    std::vector<int> masked_rows;
    Mat target(n_mask, values);
    Eigen::Index t = 0;
    for (std::size_t b = 0; b < batch.size(); ++b)
        for (int i : plans[b].masked) {
            masked_rows.push_back(static_cast<int>(b) * n + i);
            target.row(t++) = batch[b]->tokens.row(i);
        }
    return ad::mse(ad::gather_rows(pred, std::move(masked_rows)), target);
}

MaeResult MaeModel::reconstruct(const fovea::TokenizedImage& tokens, const MaskPlan& plan) const {
    Tape tape(false);
    const fovea::TokenizedImage* batch[] = {&tokens};
    Var recon;
    Var l = loss(tape, batch, std::span<const MaskPlan>(&plan, 1), &recon);
    MaeResult out;
    out.reconstruction = recon.value();
    out.loss = l.value()(0, 0);
    // Encoder output is recomputed here for inspection; it reads visible rows only.
    Mat visible(static_cast<Eigen::Index>(plan.visible.size()), tokens.tokens.cols());
    for (std::size_t j = 0; j < plan.visible.size(); ++j)
        visible.row(static_cast<Eigen::Index>(j)) = tokens.tokens.row(plan.visible[j]);
    Tape enc_tape(false);
    Var enc = encoder_->embed(enc_tape, visible, plan.visible);
    out.encoded = encoder_->blocks(enc_tape, enc, Segments::uniform(1, static_cast<int>(plan.visible.size()))).value();
    return out;
}

MaeResult mae_reconstruct(const MaeModel& model, const fovea::TokenizedImage& tokens, const MaskPlan& plan) {
    return model.reconstruct(tokens, plan);
}

std::vector<double> train_mae(MaeModel& model, const std::vector<fovea::TokenizedImage>& images,
                              const MaeTrainOptions& options) {
    if (images.empty()) throw InvalidInput("MAE training needs at least one image");
    ParamStore& store = model.params();
    nn::Adam adam(store);
    Rng rng(options.seed);
    std::vector<double> losses;
    const int n = static_cast<int>(model.pattern().token_count());
    const int batch = std::min<int>(options.batch, static_cast<int>(images.size()));
    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    for (int step = 0; step < options.steps; ++step) {
        std::vector<const fovea::TokenizedImage*> items;
        std::vector<MaskPlan> plans;
        for (int b = 0; b < batch; ++b) {
            const std::size_t idx = batch == static_cast<int>(images.size()) ? static_cast<std::size_t>(b)
                                                                             : rng() % images.size();
            items.push_back(&images[idx]);
            plans.push_back(mae_mask(n, options.mask_ratio, rng()));
        }
        store.zero_grad();
        Tape tape;
        Var l = model.loss(tape, items, plans);
        const double value = l.value()(0, 0);
        if (!std::isfinite(value))
            throw DivergenceError("MAE loss became non-finite at step " + std::to_string(step));
        losses.push_back(value);
        tape.backward(l);
        nn::clip_grad_norm(store, 1.0);
        adam.step(store, nn::cosine_lr(options.lr, step, options.steps));
    }
    return losses;
}

FlopsReport count_flops(const EncoderConfig& config, long n_tokens, long embed_input, long batch) {
    if (n_tokens <= 0 || embed_input <= 0 || batch <= 0) throw InvalidInput("count_flops arguments must be positive");
    const double n = static_cast<double>(n_tokens);
    const double d = static_cast<double>(config.dim);
    const double depth = static_cast<double>(config.depth);
    FlopsReport r;
    r.batch = batch;
    r.patch_embed_macs = n * static_cast<double>(embed_input) * d;
    r.attention_score_macs = depth * 2.0 * n * n * d;
    r.attention_macs = depth * 4.0 * n * d * d + r.attention_score_macs;
    r.mlp_macs = depth * 2.0 * n * d * (config.mlp_ratio * d);
    r.total_macs = r.patch_embed_macs + r.attention_macs + r.mlp_macs;
    r.gflops = r.total_macs * static_cast<double>(batch) / 1e9;
    return r;
}

}  // namespace gazevit::encoder
