#include "gazevit/policy.hpp"

#include <cmath>
#include <numeric>

#include "gazevit/errors.hpp"

namespace gazevit::policy {

void PolicyConfig::validate() const {
    if (chunk_size < 1) throw InvalidInput("chunk_size must be at least 1");
    if (action_dim < 1 || proprio_dim < 1) throw InvalidInput("action and proprio dimensions must be positive");
    if (dim <= 0 || heads <= 0 || dim % heads != 0) throw InvalidInput("policy width must be divisible by heads");
    if (depth < 0 || time_features < 2 || time_features % 2 != 0) throw InvalidInput("invalid policy depth/time features");
    if (flow_steps < 1) throw InvalidInput("flow_steps must be at least 1");
    if (!(ema_decay >= 0 && ema_decay < 1)) throw InvalidInput("ema_decay must lie in [0,1)");
    if (!(proprio_dropout >= 0 && proprio_dropout < 1)) throw InvalidInput("proprio_dropout must lie in [0,1)");
    if (!(lr > 0)) throw InvalidInput("lr must be positive");
    if (schedule != "cosine" && schedule != "constant") throw InvalidInput("schedule must be cosine or constant");
    if (steps < 0 || batch < 1) throw InvalidInput("steps must be nonnegative and batch positive");
    if (ensemble_m < 0) throw InvalidInput("ensemble_m must be nonnegative");
    if (use_image && encoder.dim != dim) throw InvalidInput("image encoder width must equal policy width");
}

Mat flow_interpolate(const Mat& z0, const Mat& actions, double t) {
    if (z0.rows() != actions.rows() || z0.cols() != actions.cols()) throw InvalidInput("noise and action shapes differ");
    return (1.0 - t) * z0 + t * actions;
}

Mat adaln_modulate(const Mat& x, const RowVec& gamma, const RowVec& beta) {
    if (gamma.cols() != x.cols() || beta.cols() != x.cols()) throw InvalidInput("modulation width mismatch");
    Tape tape(false);
    Var ln = ad::layer_norm(tape.constant(x));
    Mat out = ln.value();
    out.array().rowwise() *= (gamma.array() + 1.0);
    out.rowwise() += beta;
    return out;
}

Var adaln(Var x, Var gamma, Var beta) {
    return ad::add(ad::mul(ad::add_scalar(gamma, 1.0), ad::layer_norm(x)), beta);
}

RowVec timestep_features(double t, int features) {
    const int half = features / 2;
    RowVec f(features);
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        f(i) = std::cos(1000.0 * t * freq);
        f(half + i) = std::sin(1000.0 * t * freq);
    }
    return f;
}

VelocityNet::VelocityNet(ParamStore& store, const std::string& prefix, const PolicyConfig& config, Rng& rng)
    : config_(config),
      in_proj_(store, prefix + ".in_proj", config.action_dim, config.dim, rng),
      action_pos_(&store.add(prefix + ".action_pos", nn::trunc_normal(config.chunk_size, config.dim, 0.02, rng))),
      proprio_(store, prefix + ".proprio", config.proprio_dim, config.dim, rng),
      time_fc1_(store, prefix + ".time.fc1", config.time_features, config.dim, rng),
      time_fc2_(store, prefix + ".time.fc2", config.dim, config.dim, rng) {
    const int hidden = static_cast<int>(config.mlp_ratio * config.dim);
    for (int i = 0; i < config.depth; ++i) {
        const std::string p = prefix + ".block" + std::to_string(i);
        blocks_.push_back({nn::Linear(store, p + ".adaln", config.dim, 9 * config.dim, rng, true),
                           nn::MultiHeadAttention(store, p + ".self_attn", config.dim, config.heads, rng),
                           nn::MultiHeadAttention(store, p + ".cross_attn", config.dim, config.heads, rng),
                           nn::Mlp(store, p + ".mlp", config.dim, hidden, rng)});
    }
    final_modulation_ = nn::Linear(store, prefix + ".final.adaln", config.dim, 2 * config.dim, rng, true);
    out_proj_ = nn::Linear(store, prefix + ".final.out", config.dim, config.action_dim, rng, true);
}

Var VelocityNet::time_embedding(Tape& tape, std::span<const double> t) const {
    Mat f(static_cast<Eigen::Index>(t.size()), config_.time_features);
    for (std::size_t i = 0; i < t.size(); ++i) f.row(static_cast<Eigen::Index>(i)) = timestep_features(t[i], config_.time_features);
    return time_fc2_(tape, ad::silu(time_fc1_(tape, tape.constant(std::move(f)))));
}

Mat VelocityNet::block_modulation(int block, double t) const {
    Tape tape(false);
    const double ts[] = {t};
    Var c = time_embedding(tape, ts);
    return blocks_.at(block).modulation(tape, ad::silu(c)).value();
}

Var VelocityNet::operator()(Tape& tape, Var z, std::span<const double> t, Var c_img, const Segments& img_segments,
                            Var proprio) const {
    const int B = static_cast<int>(t.size());
    const int K = config_.chunk_size;
    const int d = config_.dim;
    if (z.rows() != static_cast<Eigen::Index>(B) * K || z.cols() != config_.action_dim)
        throw InvalidInput("latent has shape " + std::to_string(z.rows()) + "x" + std::to_string(z.cols()) +
                           ", expected " + std::to_string(B * K) + "x" + std::to_string(config_.action_dim));
    if (proprio.rows() != B || proprio.cols() != config_.proprio_dim)
        throw InvalidInput("proprio has " + std::to_string(proprio.cols()) + " columns, expected " +
                           std::to_string(config_.proprio_dim));
    if (img_segments.count() != B || c_img.cols() != d) throw InvalidInput("image condition does not match batch");
    if (!z.value().allFinite() || !proprio.value().allFinite() || !c_img.value().allFinite())
        throw InvalidInput("non-finite velocity network input");
    for (double tv : t)
        if (!std::isfinite(tv)) throw InvalidInput("non-finite flow time");

    // Sequence per sample: K action tokens followed by the proprio token.
    std::vector<int> pos(static_cast<std::size_t>(B) * K);
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i % K);
    Var act = in_proj_(tape, z) + ad::gather_rows(tape.param(*action_pos_), std::move(pos));
    Var prop = proprio_(tape, proprio);
    const int L = K + 1;
    std::vector<int> order(static_cast<std::size_t>(B) * L);
    std::vector<int> sample_of_row(order.size());
    std::vector<int> action_rows;
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < L; ++i) {
            order[b * L + i] = i < K ? b * K + i : B * K + b;
            sample_of_row[b * L + i] = b;
            if (i < K) action_rows.push_back(b * L + i);
        }
    Var parts[] = {act, prop};
    Var x = ad::gather_rows(ad::concat_rows(parts), std::move(order));
    const Segments seq = Segments::uniform(B, L);

    Var c = ad::silu(time_embedding(tape, t));
    auto chunk = [&](Var mod, int i) { return ad::slice_cols(mod, i * d, d); };
    for (const Block& blk : blocks_) {
        Var mod = ad::gather_rows(blk.modulation(tape, c), sample_of_row);
        Var h = adaln(x, chunk(mod, 1), chunk(mod, 0));
        x = x + ad::mul(chunk(mod, 2), blk.self_attn(tape, h, h, seq, seq));
        h = adaln(x, chunk(mod, 4), chunk(mod, 3));
        x = x + ad::mul(chunk(mod, 5), blk.cross_attn(tape, h, c_img, seq, img_segments));
        h = adaln(x, chunk(mod, 7), chunk(mod, 6));
        x = x + ad::mul(chunk(mod, 8), blk.mlp(tape, h));
    }
    Var fmod = ad::gather_rows(final_modulation_(tape, c), std::move(sample_of_row));
    Var out = out_proj_(tape, adaln(x, chunk(fmod, 1), chunk(fmod, 0)));
    return ad::gather_rows(out, std::move(action_rows));
}

FlowPolicy::FlowPolicy(const PolicyConfig& config) : config_(config) {
    config.validate();
    Rng rng(config.seed);
    if (config.use_image)
        encoder_ = std::make_unique<encoder::ObservationEncoder>(store_, "obs", config.encoder, rng, config.n_queries);
    net_ = std::make_unique<VelocityNet>(store_, "dit", config, rng);
}

Var FlowPolicy::encode_images(Tape& tape, std::span<const fovea::TokenizedImage* const> images, int batch,
                              Segments& segments) const {
    if (!encoder_) {
        segments = Segments::uniform(batch, 1);
        return tape.constant(Mat::Zero(batch, config_.dim));
    }
    if (static_cast<int>(images.size()) != batch) throw InvalidInput("one image per sample is required");
    for (const auto* img : images)
        if (!img) throw InvalidInput("policy with an image encoder needs an image");
    segments = Segments::uniform(batch, encoder_->n_queries());
    return (*encoder_)(tape, images);
}

Observation FlowPolicy::encode(const fovea::TokenizedImage* image, const RowVec& proprio) const {
    if (proprio.cols() != config_.proprio_dim) throw InvalidInput("proprio length does not match the policy");
    Tape tape(false);
    Segments segs;
    const fovea::TokenizedImage* imgs[] = {image};
    Var c = encode_images(tape, std::span(imgs, encoder_ ? 1 : 0), 1, segs);
    return {c.value(), proprio};
}

Mat FlowPolicy::velocity(const Mat& z, std::span<const double> t, std::span<const Observation> obs) const {
    if (obs.size() != t.size()) throw InvalidInput("one flow time per observation is required");
    Tape tape(false);
    Segments segs;
    Eigen::Index img_rows = 0;
    for (const auto& o : obs) {
        img_rows += o.c_img.rows();
        segs.offsets.push_back(static_cast<int>(img_rows));
    }
    Mat c_img(img_rows, config_.dim);
    Mat proprio(static_cast<Eigen::Index>(obs.size()), config_.proprio_dim);
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        if (obs[i].c_img.cols() != config_.dim) throw InvalidInput("c_img width does not match the policy");
        if (obs[i].proprio.cols() != config_.proprio_dim) throw InvalidInput("proprio length does not match the policy");
        c_img.middleRows(r, obs[i].c_img.rows()) = obs[i].c_img;
        r += obs[i].c_img.rows();
        proprio.row(static_cast<Eigen::Index>(i)) = obs[i].proprio;
    }
    return (*net_)(tape, tape.constant(z), t, tape.constant(std::move(c_img)), segs, tape.constant(std::move(proprio)))
        .value();
}

Mat dit_forward(const FlowPolicy& policy, const FlowState& state, const Observation& obs) {
    const double t[] = {state.t};
    return policy.velocity(state.z, t, std::span(&obs, 1));
}

CfmLoss cfm_loss(FlowPolicy& policy, const Mat& actions, const Observation& obs, double t, const Mat& z0,
                 bool accumulate) {
    const auto& cfg = policy.config();
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidInput("flow time must lie in [0,1]");
    if (actions.rows() != cfg.chunk_size || actions.cols() != cfg.action_dim)
        throw InvalidInput("action chunk shape does not match the policy");
    CfmLoss out;
    out.z_t = flow_interpolate(z0, actions, t);
    out.target = actions - z0;
    Tape tape(accumulate);
    Segments segs;
    segs.offsets.push_back(static_cast<int>(obs.c_img.rows()));
    const double ts[] = {t};
    Var v = policy.net()(tape, tape.constant(out.z_t), ts, tape.constant(obs.c_img), segs, tape.constant(obs.proprio));
    Var l = ad::mse(v, out.target);
    out.loss = l.value()(0, 0);
    if (accumulate) tape.backward(l);
    return out;
}

Mat euler_integrate_field(const std::function<Mat(const Mat&, double)>& velocity, Mat z, int steps) {
    if (steps < 1) throw InvalidInput("Euler integration needs at least one step");
    const double dt = 1.0 / steps;
    for (int i = 0; i < steps; ++i) {
        z += dt * velocity(z, static_cast<double>(i) / steps);
        if (!z.allFinite()) throw DivergenceError("Euler integration produced a non-finite state at step " + std::to_string(i));
    }
    return z;
}

ActionChunk euler_integrate(const FlowPolicy& policy, const Observation& obs, int steps, Mat z0) {
    auto field = [&](const Mat& z, double t) {
        const double ts[] = {t};
        return policy.velocity(z, ts, std::span(&obs, 1));
    };
    return {euler_integrate_field(field, std::move(z0), steps)};
}

ActionChunk euler_sample(const FlowPolicy& policy, const Observation& obs, int steps, std::uint64_t seed) {
    Rng rng(seed);
    const auto& cfg = policy.config();
    return euler_integrate(policy, obs, steps, nn::standard_normal(cfg.chunk_size, cfg.action_dim, rng));
}

std::vector<ActionChunk> euler_sample_batch(const FlowPolicy& policy, std::span<const Observation> obs, int steps,
                                            Rng& rng) {
    const auto& cfg = policy.config();
    const int K = cfg.chunk_size;
    Mat z = nn::standard_normal(static_cast<Eigen::Index>(obs.size()) * K, cfg.action_dim, rng);
    std::vector<double> ts(obs.size());
    auto field = [&](const Mat& zz, double t) {
        std::fill(ts.begin(), ts.end(), t);
        return policy.velocity(zz, ts, obs);
    };
    z = euler_integrate_field(field, std::move(z), steps);
    std::vector<ActionChunk> out;
    for (std::size_t i = 0; i < obs.size(); ++i) out.push_back({z.middleRows(static_cast<Eigen::Index>(i) * K, K)});
    return out;
}

void EnsembleBuffer::add(long emitted_at, Mat chunk) {
    if (chunk.rows() < 1) throw InvalidInput("empty action chunk");
    if (!chunks_.empty() && chunk.cols() != chunks_.front().chunk.cols())
        throw InvalidInput("action width differs from buffered chunks");
    // Drop chunks that end before the new one starts.
    while (!chunks_.empty() && chunks_.front().emitted_at + chunks_.front().chunk.rows() <= emitted_at)
        chunks_.pop_front();
    chunks_.push_back({emitted_at, std::move(chunk)});
}

RowVec EnsembleBuffer::action(long now) {
    while (!chunks_.empty() && chunks_.front().emitted_at + chunks_.front().chunk.rows() <= now) chunks_.pop_front();
    RowVec acc;
    double wsum = 0.0;
    for (const Entry& e : chunks_) {
        const long age = now - e.emitted_at;
        if (age < 0 || age >= e.chunk.rows()) continue;
        const double w = std::exp(-m_ * static_cast<double>(age));
        if (acc.size() == 0) acc = RowVec::Zero(e.chunk.cols());
        acc += w * e.chunk.row(age);
        wsum += w;
    }
    if (wsum == 0.0) throw PolicyStall("no buffered chunk covers control step " + std::to_string(now));
    return acc / wsum;
}

RowVec temporal_ensemble(EnsembleBuffer& buffer, long now) { return buffer.action(now); }

TrainResult train_policy(FlowPolicy& policy, const std::vector<PolicySample>& data, const StepCallback& on_step) {
    const PolicyConfig& cfg = policy.config();
    if (data.empty()) throw InvalidInput("policy training needs data");
    for (const auto& s : data) {
        if (s.actions.rows() != cfg.chunk_size || s.actions.cols() != cfg.action_dim)
            throw InvalidInput("training chunk shape does not match the policy");
        if (s.proprio.cols() != cfg.proprio_dim) throw InvalidInput("training proprio length does not match the policy");
        if (cfg.use_image && !s.image) throw InvalidInput("training sample lacks an image");
    }
    ParamStore& store = policy.params();
    nn::Adam adam(store);
    nn::Ema ema(store, cfg.ema_decay);
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    TrainResult result;
    const int B = cfg.batch;
    const int K = cfg.chunk_size;

    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<const PolicySample*> batch;
        for (int b = 0; b < B; ++b) batch.push_back(&data[rng() % data.size()]);

        std::vector<double> ts(B);
        Mat z0 = nn::standard_normal(static_cast<Eigen::Index>(B) * K, cfg.action_dim, rng);
        Mat zt(B * K, cfg.action_dim), target(B * K, cfg.action_dim);
        Mat proprio(B, cfg.proprio_dim);
        std::vector<const fovea::TokenizedImage*> images;
        for (int b = 0; b < B; ++b) {
            ts[b] = unif(rng);
            const Mat& A = batch[b]->actions;
            auto z0b = z0.middleRows(static_cast<Eigen::Index>(b) * K, K);
            zt.middleRows(static_cast<Eigen::Index>(b) * K, K) = (1.0 - ts[b]) * z0b + ts[b] * A;
            target.middleRows(static_cast<Eigen::Index>(b) * K, K) = A - z0b;
            const bool drop = unif(rng) < cfg.proprio_dropout;
            proprio.row(b) = drop ? RowVec(RowVec::Zero(cfg.proprio_dim)) : batch[b]->proprio;
            if (cfg.use_image) images.push_back(&*batch[b]->image);
        }

        store.zero_grad();
        Tape tape;
        Segments segs;
        Var c_img = policy.encode_images(tape, images, B, segs);
        Var v = policy.net()(tape, tape.constant(zt), ts, c_img, segs, tape.constant(proprio));
        Var loss = ad::mse(v, target);
        const double value = loss.value()(0, 0);
        if (!std::isfinite(value))
            throw DivergenceError("policy loss became non-finite at step " + std::to_string(step) +
                                  " (last finite loss " +
                                  (result.losses.empty() ? std::string("n/a") : std::to_string(result.losses.back())) + ")");
        tape.backward(loss);
        nn::clip_grad_norm(store, cfg.grad_clip);
        const double lr = cfg.schedule == "cosine" ? nn::cosine_lr(cfg.lr, step, cfg.steps) : cfg.lr;
        adam.step(store, lr);
        ema.update(store);
        result.losses.push_back(value);
        result.learning_rates.push_back(lr);
        if (on_step) on_step(step, value);
    }
    ema.copy_to(store);
    return result;
}

}  // namespace gazevit::policy
