#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "gazevit/encoder.hpp"
#include "gazevit/errors.hpp"
#include "gazevit/fovea.hpp"
#include "gazevit/gaze.hpp"
#include "gazevit/png_io.hpp"
#include "gazevit/policy.hpp"
#include "gazevit/sync.hpp"
#include "gazevit/tasks.hpp"
#include "plot.hpp"

namespace gazevit::cli {

namespace fs = std::filesystem;
using fovea::PatternKind;

RunConfig default_config() {
    return RunConfig({
        {"run.seed", "0"},
        {"run.out", ""},

        {"pattern.kind", "foveated"},
        {"pattern.gaze_x", "0.5"},
        {"pattern.gaze_y", "0.5"},
        {"pattern.image", ""},

        {"tokenize.kind", "foveated"},
        {"tokenize.gaze_x", "0.5"},
        {"tokenize.gaze_y", "0.5"},
        {"tokenize.image", ""},

        {"flops.preset", "vit-b"},
        {"flops.batch", "64"},

        {"mae.images", "8"},
        {"mae.steps", "200"},
        {"mae.batch", "8"},
        {"mae.lr", "1e-3"},
        {"mae.mask_ratio", "0.75"},
        {"mae.panels", "4"},

        {"toytrain.task", "mixture2d"},

        {"mixture.per_class", "2000"},
        {"mixture.steps", "2000"},
        {"mixture.batch", "64"},
        {"mixture.lr", "1e-3"},
        {"mixture.eval_samples", "1500"},

        {"blob.train", "192"},
        {"blob.eval", "60"},
        {"blob.steps", "300"},
        {"blob.batch", "16"},
        {"blob.lr", "3e-3"},

        {"scripted.train_episodes", "12"},
        {"scripted.eval_episodes", "3"},
        {"scripted.variants", "fine,coarse,fov-act,fov-unet"},
        {"scripted.steps", "300"},
        {"scripted.batch", "16"},
        {"scripted.lr", "1e-3"},
        {"scripted.chunk_size", "4"},
        {"scripted.dim", "32"},
        {"scripted.fixation_noise", "0.15"},
        {"scripted.gaze_steps", "300"},

        {"sync.frames", "100"},
        {"sync.fps", "25"},
        {"sync.drop", "0.5"},
        {"sync.base_delay", "0"},
        {"sync.jitter", "none"},
        {"sync.jitter_scale", "0"},
        {"sync.frequency", "0.5"},
        {"sync.amplitude", "0.1"},
        {"sync.center", "0.5"},

        {"eval.task", "mixture2d"},
        {"eval.checkpoint", ""},
    });
}

namespace {

std::string num(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

std::string short_num(double v) {
    std::ostringstream s;
    s << std::setprecision(6) << v;
    return s.str();
}

/// Output directory, resolved config and a key/value metrics record.
class Run {
public:
    Run(RunConfig cfg, const std::string& verb, std::ostream& out) : cfg_(std::move(cfg)), out_(out) {
        const auto base = cfg_.get_string("run.out");
        dir_ = base.empty() ? fs::path("runs") / verb : fs::path(base);
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
        cfg_.write_resolved(dir_ / "resolved_config.txt");
        out_ << verb << ": writing to " << dir_.string() << "\n";
    }

    const RunConfig& cfg() const { return cfg_; }
    std::uint64_t seed() const { return cfg_.get_u64("run.seed"); }
    fs::path path(const std::string& name) const { return dir_ / name; }
    std::ostream& out() { return out_; }

    void metric(const std::string& key, const std::string& value) {
        metrics_.emplace_back(key, value);
        out_ << "  " << key << " = " << value << "\n";
    }
    void metric(const std::string& key, double value) { metric(key, num(value)); }

    ~Run() {
        std::ofstream f(dir_ / "metrics.txt");
        for (const auto& [k, v] : metrics_) f << k << " = " << v << "\n";
    }

private:
    RunConfig cfg_;
    std::ostream& out_;
    fs::path dir_;
    std::vector<std::pair<std::string, std::string>> metrics_;
};

std::ofstream open_out(const fs::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    return f;
}

void write_text(const fs::path& path, const std::string& text) { open_out(path) << text; }

std::string read_text(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(f), {}};
}

GazePoint config_gaze(const RunConfig& cfg, const std::string& section) {
    const double x = cfg.get_double(section + ".gaze_x"), y = cfg.get_double(section + ".gaze_y");
    if (x < 0 || x > 1 || y < 0 || y > 1) throw ConfigError(section + ": gaze must lie in [0,1]");
    return {x, y};
}

ImageBuffer source_image(const RunConfig& cfg, const std::string& key, std::uint64_t seed) {
    const auto file = cfg.get_string(key);
    if (!file.empty()) return read_png(file);
    return tasks::toy_images(1, seed).front();
}

PatternKind config_kind(const RunConfig& cfg, const std::string& key) {
    try {
        return fovea::parse_kind(cfg.get_string(key));
    } catch (const InvalidInput& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

void write_curve(const fs::path& csv, const fs::path& png, const std::vector<std::string>& names,
                 const std::vector<std::vector<double>>& curves) {
    auto f = open_out(csv);
    f << "step";
    for (const auto& n : names) f << "," << n;
    f << "\n";
    std::size_t rows = 0;
    for (const auto& c : curves) rows = std::max(rows, c.size());
    for (std::size_t i = 0; i < rows; ++i) {
        f << i;
        for (const auto& c : curves) f << "," << (i < c.size() ? num(c[i]) : "");
        f << "\n";
    }
    std::vector<Series> series;
    bool positive = true;
    for (const auto& c : curves) {
        Series s;
        for (std::size_t i = 0; i < c.size(); ++i) {
            s.x.push_back(static_cast<double>(i));
            s.y.push_back(c[i]);
            positive = positive && c[i] > 0;
        }
        series.push_back(std::move(s));
    }
    write_png(line_chart(series, 640, 400, positive), png);
}

double tail_mean(const std::vector<double>& v) {
    if (v.empty()) return std::nan("");
    const std::size_t n = std::max<std::size_t>(1, v.size() / 10);
    return std::accumulate(v.end() - static_cast<std::ptrdiff_t>(n), v.end(), 0.0) / static_cast<double>(n);
}

policy::StepCallback progress(std::ostream& out, int total) {
    const int every = std::max(1, total / 10);
    return [&out, every, total](int step, double loss) {
        if ((step + 1) % every == 0 || step + 1 == total)
            out << "    step " << step + 1 << "/" << total << " loss " << short_num(loss) << "\n";
    };
}

// ---------------------------------------------------------------- pattern

int cmd_pattern(Run& run) {
    const auto& cfg = run.cfg();
    const auto kind = config_kind(cfg, "pattern.kind");
    const auto pattern = fovea::build_pattern(kind);
    const auto gaze = config_gaze(cfg, "pattern");
    ImageBuffer canvas = fovea::fit_to_canvas(source_image(cfg, "pattern.image", run.seed()), pattern);

    PixelCoord off{0, 0};
    if (kind == PatternKind::Foveated) off = fovea::gaze_offset(gaze, pattern);
    int drawn = 0;
    for (const auto& p : pattern.patches) {
        draw_rect(canvas, p.origin_x + off.x, p.origin_y + off.y, p.size, p.size, palette(p.level));
        ++drawn;
    }
    if (kind == PatternKind::Foveated) {
        const auto g = gaze_to_pixel(gaze, canvas.width(), canvas.height());
        draw_cross(canvas, g.x, g.y, 5, {1.0, 1.0, 1.0});
    }

    const std::string stem = "pattern_" + std::string(fovea::to_string(kind));
    write_png(canvas, run.path(stem + ".png"));
    const auto text = fovea::serialize_pattern(pattern);
    write_text(run.path(stem + ".txt"), text);
    const bool same = fovea::parse_pattern(read_text(run.path(stem + ".txt"))) == pattern;

    run.metric("kind", std::string(fovea::to_string(kind)));
    run.metric("rectangles", drawn);
    run.metric("canvas", std::to_string(pattern.canvas_width) + "x" + std::to_string(pattern.canvas_height));
    run.metric("reparse_identical", same ? "true" : "false");
    return same ? kOk : kIoError;
}

// ---------------------------------------------------------------- tokenize

ImageBuffer token_mosaic(const fovea::TokenizedImage& tok) {
    const int n = static_cast<int>(tok.tokens.rows()), b = tok.pattern.base_patch;
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    const int rows = (n + cols - 1) / cols, cell = b + 2;
    ImageBuffer out(cols * cell, rows * cell, 3, 1.0);
    for (int i = 0; i < n; ++i) {
        const int ox = (i % cols) * cell + 1, oy = (i / cols) * cell + 1;
        for (int y = 0; y < b; ++y)
            for (int x = 0; x < b; ++x)
                for (int c = 0; c < 3; ++c) out.at(ox + x, oy + y, c) = tok.tokens(i, (y * b + x) * 3 + c);
    }
    return out;
}

int cmd_tokenize(Run& run) {
    const auto& cfg = run.cfg();
    const auto kind = config_kind(cfg, "tokenize.kind");
    const auto pattern = fovea::build_pattern(kind);
    const auto image = fovea::fit_to_canvas(source_image(cfg, "tokenize.image", run.seed()), pattern);
    std::optional<GazePoint> gaze;
    if (kind == PatternKind::Foveated) gaze = config_gaze(cfg, "tokenize");
    const auto tok = fovea::tokenize(image, pattern, gaze);
    const auto back = fovea::assemble(tok);

    write_png(image, run.path("input.png"));
    write_png(back, run.path("reassembled.png"));
    write_png(token_mosaic(tok), run.path("tokens.png"));
    write_text(run.path("pattern.txt"), fovea::serialize_pattern(pattern));
    auto f = open_out(run.path("tokens.csv"));
    f << "index,level,x,y,size,mean_r,mean_g,mean_b\n";
    for (int i = 0; i < static_cast<int>(pattern.token_count()); ++i) {
        const auto& p = pattern.patches[static_cast<std::size_t>(i)];
        double m[3] = {0, 0, 0};
        const int px = pattern.base_patch * pattern.base_patch;
        for (int k = 0; k < px; ++k)
            for (int c = 0; c < 3; ++c) m[c] += tok.tokens(i, k * 3 + c) / px;
        f << i << "," << p.level << "," << p.origin_x << "," << p.origin_y << "," << p.size << "," << num(m[0])
          << "," << num(m[1]) << "," << num(m[2]) << "\n";
    }

    run.metric("kind", std::string(fovea::to_string(kind)));
    run.metric("tokens", static_cast<double>(pattern.token_count()));
    run.metric("token_values", pattern.token_values());
    if (gaze) {
        const auto off = fovea::gaze_offset(*gaze, pattern);
        run.metric("shift", std::to_string(off.x) + "," + std::to_string(off.y));
    }
    return kOk;
}

// ---------------------------------------------------------------- flops

int cmd_flops(Run& run) {
    const auto& cfg = run.cfg();
    const auto preset = cfg.get_string("flops.preset");
    const long batch = cfg.get_int("flops.batch");
    if (batch < 1) throw ConfigError("flops.batch must be positive");
    std::function<encoder::EncoderConfig(PatternKind)> make;
    if (preset == "vit-b") make = encoder::EncoderConfig::vit_b;
    else if (preset == "desk") make = encoder::EncoderConfig::desk;
    else throw ConfigError("flops.preset: expected vit-b or desk, got '" + preset + "'");

    auto f = open_out(run.path("flops.csv"));
    f << "pattern,tokens,embed_input,batch,patch_embed_gflops,attention_gflops,mlp_gflops,gflops\n";
    const double scale = static_cast<double>(batch) / 1e9;
    for (PatternKind kind : {PatternKind::Fine, PatternKind::Coarse, PatternKind::Foveated}) {
        const auto ec = make(kind);
        const auto r = encoder::count_flops(ec, ec.n_tokens, ec.embed_input, batch);
        const std::string name(fovea::to_string(kind));
        f << name << "," << ec.n_tokens << "," << ec.embed_input << "," << batch << ","
          << num(r.patch_embed_macs * scale) << "," << num(r.attention_macs * scale) << ","
          << num(r.mlp_macs * scale) << "," << num(r.gflops) << "\n";
        run.metric(name + "_gflops", r.gflops);
    }
    return kOk;
}

// ---------------------------------------------------------------- mae-demo

int cmd_mae(Run& run) {
    const auto& cfg = run.cfg();
    const int n_images = cfg.get_int("mae.images"), panels = cfg.get_int("mae.panels");
    if (n_images < 1 || panels < 0) throw ConfigError("mae.images must be positive and mae.panels non-negative");
    const auto pattern = fovea::build_pattern(PatternKind::Foveated);
    const auto enc = encoder::EncoderConfig::desk(PatternKind::Foveated);
    const auto dec = encoder::EncoderConfig::for_pattern(PatternKind::Foveated, 1, 32, 4);
    encoder::MaeModel model(pattern, enc, dec, run.seed());

    std::vector<fovea::TokenizedImage> toks;
    for (const auto& img : tasks::toy_images(n_images, run.seed() + 1))
        toks.push_back(fovea::tokenize(img, pattern, GazePoint(0.5, 0.5)));

    encoder::MaeTrainOptions opt;
    opt.steps = cfg.get_int("mae.steps");
    opt.batch = cfg.get_int("mae.batch");
    opt.lr = cfg.get_double("mae.lr");
    opt.mask_ratio = cfg.get_double("mae.mask_ratio");
    opt.seed = run.seed() + 2;

    std::vector<encoder::MaskPlan> plans;
    std::vector<const fovea::TokenizedImage*> ptrs;
    for (int i = 0; i < n_images; ++i) {
        plans.push_back(encoder::mae_mask(static_cast<int>(pattern.token_count()), opt.mask_ratio, run.seed() + 100 + i));
        ptrs.push_back(&toks[static_cast<std::size_t>(i)]);
    }
    auto fixed_loss = [&] {
        ad::Tape tape(false);
        return model.loss(tape, ptrs, plans).value()(0, 0);
    };
    const double before = fixed_loss();
    const auto losses = encoder::train_mae(model, toks, opt);
    const double after = fixed_loss();
    write_curve(run.path("losses.csv"), run.path("loss_curve.png"), {"loss"}, {losses});

    std::vector<ImageBuffer> rows;
    for (int i = 0; i < std::min(panels, n_images); ++i) {
        const auto& tok = toks[static_cast<std::size_t>(i)];
        const auto& plan = plans[static_cast<std::size_t>(i)];
        const auto res = model.reconstruct(tok, plan);
        auto masked = tok, recon = tok;
        for (int m : plan.masked) {
            masked.tokens.row(m).setConstant(0.5);
            recon.tokens.row(m) = res.reconstruction.row(m);
        }
        rows.push_back(hconcat({fovea::assemble(tok), fovea::assemble(masked), fovea::assemble(recon)}));
    }
    if (!rows.empty()) write_png(vconcat(rows), run.path("triptych.png"));

    run.metric("fixed_mask_loss_before", before);
    run.metric("fixed_mask_loss_after", after);
    run.metric("drop_fraction", 1.0 - after / before);
    return kOk;
}

// ---------------------------------------------------------------- toytrain / eval

struct MixtureEval {
    double worst_mean = 0, worst_cov = 0;
};

MixtureEval evaluate_mixture(Run& run, const policy::FlowPolicy& pol, const tasks::MixtureTask& task, int samples) {
    MixtureEval r;
    nn::Rng rng(run.seed() + 1);
    for (int k = 0; k < static_cast<int>(task.classes.size()); ++k) {
        std::vector<policy::Observation> obs(static_cast<std::size_t>(samples), pol.encode(nullptr, task.one_hot(k)));
        const auto chunks = policy::euler_sample_batch(pol, obs, pol.config().flow_steps, rng);
        Mat s(static_cast<Eigen::Index>(chunks.size()), 2);
        for (std::size_t i = 0; i < chunks.size(); ++i) s.row(static_cast<Eigen::Index>(i)) = chunks[i].actions.row(0);
        const auto m = tasks::sample_moments(s);
        const double em = (m.mean - task.classes[static_cast<std::size_t>(k)].mean).norm();
        const double ec = (m.cov - task.classes[static_cast<std::size_t>(k)].cov).norm();
        run.metric("class" + std::to_string(k) + "_mean_error", em);
        run.metric("class" + std::to_string(k) + "_cov_error", ec);
        r.worst_mean = std::max(r.worst_mean, em);
        r.worst_cov = std::max(r.worst_cov, ec);
    }
    return r;
}

policy::PolicyConfig mixture_config(const RunConfig& cfg, const tasks::MixtureTask& task, std::uint64_t seed) {
    auto pc = task.policy_config(seed);
    pc.steps = cfg.get_int("mixture.steps");
    pc.batch = cfg.get_int("mixture.batch");
    pc.lr = cfg.get_double("mixture.lr");
    return pc;
}

int train_mixture(Run& run) {
    const auto& cfg = run.cfg();
    const auto task = tasks::MixtureTask::standard();
    nn::Rng rng(run.seed());
    const auto data = task.dataset(cfg.get_int("mixture.per_class"), rng);
    policy::FlowPolicy pol(mixture_config(cfg, task, run.seed()));
    const auto result = policy::train_policy(pol, data, progress(run.out(), pol.config().steps));
    write_curve(run.path("losses.csv"), run.path("loss_curve.png"), {"loss"}, {result.losses});
    nn::save_checkpoint(pol.params(), run.path("policy.ckpt"));
    run.metric("final_loss", result.losses.empty() ? std::nan("") : result.losses.back());
    run.metric("tail_loss", tail_mean(result.losses));
    evaluate_mixture(run, pol, task, cfg.get_int("mixture.eval_samples"));
    return kOk;
}

void report_blob(Run& run, const gaze::GazePredictor& pred, const std::vector<gaze::GazeExample>& held) {
    run.metric("mean_gaze_error", gaze::mean_gaze_error(pred, held));
    run.metric("fovea_hit_rate", gaze::fovea_hit_rate(pred, held));
    if (!held.empty()) gaze::write_heatmap_png(pred.heatmap(held.front().image), run.path("heatmap.png"));
}

int train_blob(Run& run) {
    const auto& cfg = run.cfg();
    const tasks::BlobSpec spec;
    gaze::GazePredictorConfig gc;
    gc.seed = run.seed();
    gaze::GazePredictor pred(gc);
    gaze::GazeTrainOptions opt{cfg.get_int("blob.steps"), cfg.get_int("blob.batch"), cfg.get_double("blob.lr"),
                               run.seed() + 1};
    const auto losses = gaze::train_gaze_predictor(pred, tasks::blob_dataset(cfg.get_int("blob.train"), spec, run.seed()),
                                                   opt);
    write_curve(run.path("losses.csv"), run.path("loss_curve.png"), {"loss"}, {losses});
    nn::save_checkpoint(pred.params(), run.path("gaze.ckpt"));
    run.metric("final_loss", losses.empty() ? std::nan("") : losses.back());
    report_blob(run, pred, tasks::blob_dataset(cfg.get_int("blob.eval"), spec, run.seed() + 1000));
    return kOk;
}

std::vector<tasks::Variant> parse_variants(const std::string& list) {
    std::vector<tasks::Variant> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (item.empty()) continue;
        try {
            out.push_back(tasks::parse_variant(item));
        } catch (const InvalidInput& e) {
            throw ConfigError(std::string("scripted.variants: ") + e.what());
        }
    }
    if (out.empty()) throw ConfigError("scripted.variants is empty");
    return out;
}

int train_scripted(Run& run) {
    const auto& cfg = run.cfg();
    const auto variants = parse_variants(cfg.get_string("scripted.variants"));
    const tasks::ScriptedSpec spec;
    const auto train = tasks::scripted_episodes(cfg.get_int("scripted.train_episodes"), spec, run.seed());
    const auto eval = tasks::scripted_episodes(cfg.get_int("scripted.eval_episodes"), spec, run.seed() + 1);

    tasks::ScriptedRunOptions opt;
    opt.steps = cfg.get_int("scripted.steps");
    opt.batch = cfg.get_int("scripted.batch");
    opt.lr = cfg.get_double("scripted.lr");
    opt.chunk_size = cfg.get_int("scripted.chunk_size");
    opt.dim = cfg.get_int("scripted.dim");
    opt.fixation_noise = cfg.get_double("scripted.fixation_noise");
    opt.gaze_steps = cfg.get_int("scripted.gaze_steps");
    opt.seed = run.seed();

    auto f = open_out(run.path("variants.csv"));
    f << "variant,tokens,final_loss,action_error,gaze_error,fovea_hit_rate,seconds\n";
    std::vector<std::string> names;
    std::vector<std::vector<double>> curves;
    for (auto v : variants) {
        const std::string name(tasks::to_string(v));
        run.out() << "  training " << name << "\n";
        const auto r = tasks::run_scripted_variant(v, train, eval, opt, progress(run.out(), opt.steps));
        f << name << "," << r.tokens << "," << num(r.final_loss) << "," << num(r.action_error) << ","
          << num(r.gaze_error) << "," << num(r.fovea_hit_rate) << "," << num(r.seconds) << "\n";
        run.metric(name + "_final_loss", r.final_loss);
        run.metric(name + "_action_error", r.action_error);
        if (!std::isnan(r.gaze_error)) run.metric(name + "_gaze_error", r.gaze_error);
        if (!std::isnan(r.fovea_hit_rate)) run.metric(name + "_fovea_hit_rate", r.fovea_hit_rate);
        names.push_back(name);
        curves.push_back(r.losses);
    }
    write_curve(run.path("losses.csv"), run.path("loss_curves.png"), names, curves);
    return kOk;
}

int cmd_toytrain(Run& run) {
    const auto task = run.cfg().get_string("toytrain.task");
    if (task == "mixture2d") return train_mixture(run);
    if (task == "blobgaze") return train_blob(run);
    if (task == "scripted-episode") return train_scripted(run);
    throw ConfigError("toytrain.task: expected mixture2d, blobgaze or scripted-episode, got '" + task + "'");
}

int cmd_eval(Run& run) {
    const auto& cfg = run.cfg();
    const auto task = cfg.get_string("eval.task");
    const auto ckpt = cfg.get_string("eval.checkpoint");
    if (ckpt.empty()) throw ConfigError("eval.checkpoint is required");
    if (task == "mixture2d") {
        const auto mt = tasks::MixtureTask::standard();
        policy::FlowPolicy pol(mixture_config(cfg, mt, run.seed()));
        nn::load_checkpoint(pol.params(), ckpt);
        evaluate_mixture(run, pol, mt, cfg.get_int("mixture.eval_samples"));
        return kOk;
    }
    if (task == "blobgaze") {
        gaze::GazePredictor pred(gaze::GazePredictorConfig{});
        nn::load_checkpoint(pred.params(), ckpt);
        report_blob(run, pred, tasks::blob_dataset(cfg.get_int("blob.eval"), tasks::BlobSpec{}, run.seed() + 1000));
        return kOk;
    }
    throw ConfigError("eval.task: expected mixture2d or blobgaze, got '" + task + "'");
}

// ---------------------------------------------------------------- syncdemo

int cmd_syncdemo(Run& run) {
    const auto& cfg = run.cfg();
    const int n = cfg.get_int("sync.frames");
    if (n < 2) throw ConfigError("sync.frames must be at least 2");
    const auto frames = sync::make_frames(n, cfg.get_double("sync.fps"));
    sync::SinusoidGaze wave;
    wave.frequency = cfg.get_double("sync.frequency");
    wave.amplitude = cfg.get_double("sync.amplitude");
    wave.center = cfg.get_double("sync.center");
    const auto truth = wave.function();

    sync::LatencyModel lat;
    lat.base_delay = cfg.get_double("sync.base_delay");
    lat.jitter_scale = cfg.get_double("sync.jitter_scale");
    lat.drop_probability = cfg.get_double("sync.drop");
    try {
        lat.jitter = sync::parse_jitter(cfg.get_string("sync.jitter"));
        lat.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(std::string("sync: ") + e.what());
    }

    const auto samples = sync::simulate_stream(frames, truth, lat, run.seed());
    if (samples.empty()) throw InvalidInput("every gaze sample was dropped; lower sync.drop or change the seed");
    const auto aligned = sync::align_gaze(frames, samples);
    const auto err = sync::alignment_error(frames, aligned, truth);
    run.metric("samples", static_cast<double>(samples.size()));
    run.metric("max_error", err.max_error);
    run.metric("mean_error", err.mean_error);
    run.metric("max_hold_error", err.max_hold_error);
    run.metric("max_gap", err.max_gap);

    auto g = open_out(run.path("gap_errors.csv"));
    g << "gap,max_error,mean_error\n";
    const auto clean = sync::simulate_stream(frames, truth, sync::LatencyModel{}, run.seed());
    for (int gap : {1, 2, 4, 8}) {
        const auto e = sync::alignment_error(frames, sync::align_gaze(frames, sync::decimate(clean, gap)), truth);
        g << gap << "," << num(e.max_error) << "," << num(e.mean_error) << "\n";
        run.metric("gap" + std::to_string(gap) + "_max_error", e.max_error);
    }

    auto a = open_out(run.path("aligned.csv"));
    a << "frame_id,t,true_x,true_y,aligned_x,aligned_y,provenance\n";
    Series tx, ty, ax, ay;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const double t = frames[i].t_emit;
        const auto [tl, tr] = truth(t);
        const auto tm = gaze::merge_gaze(tl, tr);
        const auto am = gaze::merge_gaze(aligned[i].left, aligned[i].right);
        a << frames[i].frame_id << "," << num(t) << "," << num(tm.x()) << "," << num(tm.y()) << "," << num(am.x())
          << "," << num(am.y()) << "," << sync::to_string(aligned[i].provenance) << "\n";
        for (auto* s : {&tx, &ty, &ax, &ay}) s->x.push_back(t);
        tx.y.push_back(tm.x());
        ty.y.push_back(tm.y());
        ax.y.push_back(am.x());
        ay.y.push_back(am.y());
    }
    write_png(line_chart({tx, ax, ty, ay}), run.path("alignment.png"));

    const Mat zeros = Mat::Zero(n, 1);
    sync::write_episode(sync::record_episode(frames, aligned, zeros, zeros, cfg.get_double("sync.fps")),
                        run.path("episode"));
    return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Foveated tokenization, flow policies, gaze prediction and stream sync", "gazevit"};
    app.require_subcommand(1);
    std::string config_file, out_dir;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sets;
    app.add_option("--config", config_file, "settings file ([section] key = value)");
    app.add_option("--seed", seed, "run seed");
    app.add_option("--out", out_dir, "run directory");
    app.add_option("--set", sets, "override as section.key=value (repeatable)");

    std::map<std::string, std::string> positional;
    struct Verb {
        const char* name;
        const char* help;
        const char* key;  // optional positional
        int (*fn)(Run&);
    };
    const Verb verbs[] = {
        {"pattern", "draw a tokenization pattern and write its text form", "pattern.kind", cmd_pattern},
        {"tokenize", "tokenize one image and reassemble it", "tokenize.kind", cmd_tokenize},
        {"flops", "FLOP table for the three patterns", "flops.preset", cmd_flops},
        {"mae-demo", "masked-autoencoder training and reconstruction triptych", nullptr, cmd_mae},
        {"toytrain", "train on mixture2d, blobgaze or scripted-episode", "toytrain.task", cmd_toytrain},
        {"syncdemo", "simulate a gaze stream and report alignment error", nullptr, cmd_syncdemo},
        {"eval", "evaluate a toytrain checkpoint", "eval.task", cmd_eval},
    };
    std::vector<std::pair<CLI::App*, const Verb*>> subs;
    std::string checkpoint;
    for (const auto& v : verbs) {
        auto* sub = app.add_subcommand(v.name, v.help);
        sub->fallthrough();
        if (v.key) sub->add_option("value", positional[v.key], v.key);
        if (std::string(v.name) == "eval") sub->add_option("--checkpoint", checkpoint, "checkpoint file");
        subs.emplace_back(sub, &v);
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        auto cfg = default_config();
        if (!config_file.empty()) cfg.merge_file(config_file);
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + s + "'");
            cfg.set(s.substr(0, eq), s.substr(eq + 1));
        }
        for (const auto& [key, value] : positional)
            if (!value.empty()) cfg.set(key, value);
        if (!checkpoint.empty()) cfg.set("eval.checkpoint", checkpoint);
        if (seed) cfg.set("run.seed", std::to_string(*seed));
        if (!out_dir.empty()) cfg.set("run.out", out_dir);

        for (const auto& [sub, verb] : subs) {
            if (!sub->parsed()) continue;
            Run run(std::move(cfg), verb->name, out);
            return verb->fn(run);
        }
        return kConfigError;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << "\n";
        return kIoError;
    } catch (const fs::filesystem_error& e) {
        err << "I/O error: " << e.what() << "\n";
        return kIoError;
    } catch (const DivergenceError& e) {
        err << "diverged: " << e.what() << "\n";
        return kDivergence;
    } catch (const InvalidInput& e) {
        err << "invalid input: " << e.what() << "\n";
        return kInvalidInput;
    }
}

}  // namespace gazevit::cli
