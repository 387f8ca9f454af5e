#include "gazevit/tasks.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <chrono>
#include <numeric>
#include <optional>
#include <cmath>

#include "gazevit/errors.hpp"

namespace gazevit::tasks {

MixtureTask MixtureTask::standard() {
    MixtureTask t;
    MixtureComponent a{RowVec(2), Mat(2, 2)}, b{RowVec(2), Mat(2, 2)};
    a.mean << 1.5, -1.0;
    a.cov << 0.09, 0.03, 0.03, 0.06;
    b.mean << -1.0, 1.5;
    b.cov << 0.06, -0.02, -0.02, 0.09;
    t.classes = {a, b};
    return t;
}

RowVec MixtureTask::one_hot(int cls) const {
    if (cls < 0 || cls >= static_cast<int>(classes.size())) throw InvalidInput("class index out of range");
    RowVec v = RowVec::Zero(static_cast<Eigen::Index>(classes.size()));
    v(cls) = 1.0;
    return v;
}

RowVec MixtureTask::draw(int cls, Rng& rng) const {
    const auto& c = classes.at(cls);
    const Mat L = Eigen::LLT<Mat>(c.cov).matrixL();
    return c.mean + (L * nn::standard_normal(c.mean.cols(), 1, rng)).transpose();
}

std::vector<policy::PolicySample> MixtureTask::dataset(int per_class, Rng& rng) const {
    std::vector<policy::PolicySample> out;
    for (int k = 0; k < static_cast<int>(classes.size()); ++k)
        for (int i = 0; i < per_class; ++i) out.push_back({std::nullopt, one_hot(k), Mat(draw(k, rng))});
    return out;
}

policy::PolicyConfig MixtureTask::policy_config(std::uint64_t seed) const {
    policy::PolicyConfig cfg;
    cfg.chunk_size = 1;
    cfg.action_dim = 2;
    cfg.proprio_dim = static_cast<int>(classes.size());
    cfg.dim = 64;
    cfg.heads = 4;
    cfg.depth = 2;
    cfg.lr = 1e-3;
    cfg.steps = 2000;
    cfg.batch = 64;
    cfg.seed = seed;
    return cfg;
}

Moments sample_moments(const Mat& samples) {
    if (samples.rows() < 2) throw InvalidInput("moments need at least two samples");
    Moments m;
    m.mean = samples.colwise().mean();
    const Mat centered = samples.rowwise() - m.mean;
    m.cov = centered.transpose() * centered / static_cast<double>(samples.rows() - 1);
    return m;
}

ImageBuffer render_blob(const BlobSpec& spec, const GazePoint& center, Rng& rng) {
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    ImageBuffer img(spec.width, spec.height, 3);
    const double cx = center.x() * spec.width, cy = center.y() * spec.height;
    const double inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            const double blob = std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) * inv);
            for (int c = 0; c < 3; ++c) {
                const double bg = spec.background + spec.noise * unif(rng);
                img.at(x, y, c) = std::clamp(bg + (1.0 - bg) * blob, 0.0, 1.0);
            }
        }
    return img;
}

std::vector<gaze::GazeExample> blob_dataset(int n, const BlobSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> pos(spec.margin, 1.0 - spec.margin);
    std::vector<gaze::GazeExample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const GazePoint g(pos(rng), pos(rng));
        out.push_back({render_blob(spec, g, rng), g});
    }
    return out;
}

std::vector<ImageBuffer> toy_images(int n, std::uint64_t seed) {
    constexpr int W = 288, H = 288;
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<ImageBuffer> out;
    for (int k = 0; k < n; ++k) {
        ImageBuffer img(W, H, 3);
        double base[3], gx[3], gy[3];
        for (int c = 0; c < 3; ++c) {
            base[c] = 0.2 + 0.3 * u(rng);
            gx[c] = 0.4 * (u(rng) - 0.5);
            gy[c] = 0.4 * (u(rng) - 0.5);
        }
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int c = 0; c < 3; ++c)
                    img.at(x, y, c) = base[c] + gx[c] * x / W + gy[c] * y / H;
        for (int d = 0; d < 3; ++d) {
            const double cx = W * u(rng), cy = H * u(rng), r = 20 + 50 * u(rng);
            double col[3] = {u(rng), u(rng), u(rng)};
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r)
                        for (int c = 0; c < 3; ++c) img.at(x, y, c) = col[c];
        }
        for (auto& v : img.data()) v = std::clamp(v, 0.0, 1.0);
        out.push_back(std::move(img));
    }
    return out;
}

ImageBuffer render_scene(const ScriptedSpec& spec, const RowVec& agent, const GazePoint& target, Rng& rng) {
    constexpr int W = 288, H = 288;
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    ImageBuffer img(W, H, 3);
    for (auto& v : img.data()) v = std::clamp(spec.background + spec.noise * unif(rng), 0.0, 1.0);
    const int ax = static_cast<int>(std::lround(agent(0) * W)), ay = static_cast<int>(std::lround(agent(1) * H));
    for (int y = ay - spec.agent_half; y <= ay + spec.agent_half; ++y)
        for (int x = ax - spec.agent_half; x <= ax + spec.agent_half; ++x)
            if (x >= 0 && x < W && y >= 0 && y < H) {
                img.at(x, y, 0) = 0.2;
                img.at(x, y, 1) = 0.4;
                img.at(x, y, 2) = 0.9;
            }
    const PixelCoord t = gaze_to_pixel(target, W, H);
    const int r = spec.dot_radius;
    for (int y = t.y - r; y <= t.y + r; ++y)
        for (int x = t.x - r; x <= t.x + r; ++x)
            if (x >= 0 && x < W && y >= 0 && y < H && (x - t.x) * (x - t.x) + (y - t.y) * (y - t.y) <= r * r) {
                img.at(x, y, 0) = 1.0;
                img.at(x, y, 1) = 0.9;
                img.at(x, y, 2) = 0.1;
            }
    return img;
}

ScriptedEpisode make_scripted_episode(const ScriptedSpec& spec, Rng& rng) {
    if (spec.steps < 2 || spec.lookahead < 0) throw InvalidInput("invalid scripted episode spec");
    std::uniform_real_distribution<double> pos(0.2, 0.8);
    ScriptedEpisode ep;
    ep.target = GazePoint(pos(rng), pos(rng));
    const int T = spec.steps;
    ep.positions.resize(T, 2);
    ep.actions.resize(T, 2);
    RowVec p(2);
    p << pos(rng), pos(rng);
    RowVec tgt(2);
    tgt << ep.target.x(), ep.target.y();
    for (int t = 0; t < T; ++t) {
        ep.positions.row(t) = p;
        RowVec v = spec.gain * (tgt - p);
        const double n = v.norm();
        if (n > spec.max_speed) v *= spec.max_speed / n;
        ep.actions.row(t) = v / spec.max_speed;
        p += v;
    }
    ep.gaze.resize(T, 2);
    for (int t = 0; t < T; ++t) {
        const int ahead = std::min(t + spec.lookahead, T - 1);
        ep.gaze.row(t) = ep.positions.row(ahead);
    }
    for (int t = 0; t < T; ++t) ep.images.push_back(render_scene(spec, ep.positions.row(t), ep.target, rng));
    return ep;
}

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::Fine: return "fine";
        case Variant::Coarse: return "coarse";
        case Variant::FovAct: return "fov-act";
        case Variant::FovUnet: return "fov-unet";
    }
    return "fine";
}

Variant parse_variant(std::string_view name) {
    if (name == "fine") return Variant::Fine;
    if (name == "coarse") return Variant::Coarse;
    if (name == "fov-act") return Variant::FovAct;
    if (name == "fov-unet") return Variant::FovUnet;
    throw InvalidInput("unknown variant '" + std::string(name) + "' (expected fine, coarse, fov-act or fov-unet)");
}

fovea::PatternKind pattern_of(Variant v) {
    switch (v) {
        case Variant::Fine: return fovea::PatternKind::Fine;
        case Variant::Coarse: return fovea::PatternKind::Coarse;
        default: return fovea::PatternKind::Foveated;
    }
}

std::vector<policy::PolicySample> scripted_samples(const std::vector<ScriptedEpisode>& episodes, Variant variant,
                                                   int chunk_size, double fixation_noise, std::uint64_t seed) {
    if (chunk_size < 1) throw InvalidInput("chunk_size must be positive");
    if (!(fixation_noise >= 0)) throw InvalidInput("fixation noise must be nonnegative");
    const auto pattern = fovea::build_pattern(pattern_of(variant));
    const bool foveated = pattern.kind == fovea::PatternKind::Foveated;
    const bool gaze_cols = variant == Variant::FovAct;
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, fixation_noise);
    std::vector<policy::PolicySample> out;
    for (const auto& ep : episodes) {
        const int T = static_cast<int>(ep.positions.rows());
        for (int t = 0; t < T; ++t) {
            Mat actions(chunk_size, gaze_cols ? 4 : 2);
            for (int i = 0; i < chunk_size; ++i) {
                actions.row(i).head(2) = ep.actions.row(std::min(t + i, T - 1));
                if (gaze_cols) actions.row(i).tail(2) = ep.gaze.row(std::min(t + 1 + i, T - 1));
            }
            const GazePoint g(ep.gaze(t, 0), ep.gaze(t, 1));
            std::vector<GazePoint> fixations{g};
            if (gaze_cols && fixation_noise > 0) fixations.emplace_back(g.x() + noise(rng), g.y() + noise(rng));
            for (const auto& f : fixations) {
                policy::PolicySample s;
                s.image = fovea::tokenize(fovea::fit_to_canvas(ep.images[t], pattern), pattern,
                                          foveated ? std::optional<GazePoint>(f) : std::nullopt);
                s.proprio = foveated ? gaze::append_gaze(ep.positions.row(t), f) : RowVec(ep.positions.row(t));
                s.actions = actions;
                out.push_back(std::move(s));
            }
        }
    }
    return out;
}

std::vector<ScriptedEpisode> scripted_episodes(int count, const ScriptedSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<ScriptedEpisode> out;
    for (int i = 0; i < count; ++i) out.push_back(make_scripted_episode(spec, rng));
    return out;
}

namespace {

double distance(const GazePoint& a, double x, double y) { return std::hypot(a.x() - x, a.y() - y); }

}  // namespace

VariantReport run_scripted_variant(Variant variant, const std::vector<ScriptedEpisode>& train,
                                   const std::vector<ScriptedEpisode>& eval, const ScriptedRunOptions& options,
                                   const policy::StepCallback& on_step) {
    if (train.empty() || eval.empty()) throw InvalidInput("scripted run needs training and evaluation episodes");
    const auto start = std::chrono::steady_clock::now();
    const auto kind = pattern_of(variant);
    const bool foveated = kind == fovea::PatternKind::Foveated;

    policy::PolicyConfig cfg;
    cfg.chunk_size = options.chunk_size;
    cfg.action_dim = variant == Variant::FovAct ? 4 : 2;
    cfg.proprio_dim = foveated ? 4 : 2;
    cfg.dim = options.dim;
    cfg.heads = options.heads;
    cfg.depth = options.policy_depth;
    cfg.use_image = true;
    cfg.pattern = kind;
    cfg.encoder = encoder::EncoderConfig::for_pattern(kind, options.encoder_depth, options.dim, options.heads);
    cfg.flow_steps = options.flow_steps;
    cfg.lr = options.lr;
    cfg.steps = options.steps;
    cfg.batch = options.batch;
    cfg.seed = options.seed;
    cfg.validate();

    VariantReport report;
    report.variant = variant;
    report.tokens = static_cast<int>(fovea::build_pattern(kind).token_count());

    policy::FlowPolicy policy(cfg);
    {
        const auto samples = scripted_samples(train, variant, options.chunk_size, options.fixation_noise, options.seed);
        report.losses = policy::train_policy(policy, samples, on_step).losses;
    }
    const std::size_t tail = std::max<std::size_t>(1, report.losses.size() / 10);
    report.final_loss = report.losses.empty() ? 0.0
                                              : std::accumulate(report.losses.end() - static_cast<long>(tail),
                                                                report.losses.end(), 0.0) /
                                                    static_cast<double>(tail);

    std::optional<gaze::GazePredictor> predictor;
    if (variant == Variant::FovUnet) {
        gaze::GazePredictorConfig pc;
        pc.seed = options.seed;
        predictor.emplace(pc);
        std::vector<gaze::GazeExample> labels;
        for (const auto& ep : train)
            for (std::size_t t = 0; t < ep.images.size(); ++t)
                labels.push_back({ep.images[t], GazePoint(ep.gaze(t, 0), ep.gaze(t, 1))});
        gaze::train_gaze_predictor(*predictor, labels, {options.gaze_steps, 16, 3e-3, options.seed});
    }

    const auto pattern = fovea::build_pattern(kind);
    double action_err = 0.0, gaze_err = 0.0;
    int frames = 0, gaze_frames = 0, hits = 0;
    std::uint64_t sample_seed = options.seed * 7919 + 1;
    for (const auto& ep : eval) {
        const int T = static_cast<int>(ep.positions.rows());
        gaze::GazeHistory history;
        for (int t = 0; t < T; ++t) {
            const RowVec pos = ep.positions.row(t);
            Mat chunk;
            GazePoint fixation;
            if (variant == Variant::FovAct) {
                const auto step = gaze::gaze_as_action_step(ep.images[t], pos, history, policy, sample_seed++);
                chunk = step.chunk.actions;
                fixation = step.gaze;
                if (t + 1 < T) {
                    gaze_err += distance(step.trajectory.front(), ep.gaze(t + 1, 0), ep.gaze(t + 1, 1));
                    ++gaze_frames;
                }
            } else if (variant == Variant::FovUnet) {
                const auto step = gaze::two_stage_step(ep.images[t], pos, *predictor, policy, sample_seed++);
                chunk = step.chunk.actions;
                fixation = step.gaze;
                gaze_err += distance(step.gaze, ep.gaze(t, 0), ep.gaze(t, 1));
                ++gaze_frames;
            } else {
                const auto tokens = fovea::tokenize(fovea::fit_to_canvas(ep.images[t], pattern), pattern);
                chunk = policy::euler_sample(policy, policy.encode(&tokens, pos), cfg.flow_steps, sample_seed++)
                            .actions;
            }
            if (foveated) hits += gaze::inside_fovea(fixation, ep.target);
            action_err += (chunk.row(0).head(2) - ep.actions.row(t)).norm();
            ++frames;
        }
    }
    report.action_error = action_err / frames;
    if (gaze_frames > 0) report.gaze_error = gaze_err / gaze_frames;
    if (foveated) report.fovea_hit_rate = static_cast<double>(hits) / frames;
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace gazevit::tasks
