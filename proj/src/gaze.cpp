#include "gazevit/gaze.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "gazevit/errors.hpp"
#include "gazevit/png_io.hpp"

namespace gazevit::gaze {
namespace {

// Softmax marginals reduced with symmetric pairing so a symmetric
// distribution lands exactly on the grid center.
double expected_coordinate(const Eigen::VectorXd& marginal) {
    const Eigen::Index n = marginal.size();
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n / 2; ++j) {
        const Eigen::Index k = n - 1 - j;
        const double a = (static_cast<double>(j) + 0.5 - n / 2.0) / static_cast<double>(n);
        const double b = (static_cast<double>(k) + 0.5 - n / 2.0) / static_cast<double>(n);
        acc += marginal(j) * a + marginal(k) * b;
    }
    return 0.5 + acc;
}

void he_init(nn::Linear& layer, Rng& rng) {
    const double fan_in = static_cast<double>(layer.weight->value.rows());
    layer.weight->value = nn::standard_normal(layer.weight->value.rows(), layer.weight->value.cols(), rng) *
                          std::sqrt(2.0 / fan_in);
}

}  // namespace

Mat cell_centers(int h, int w) {
    Mat c(static_cast<Eigen::Index>(h) * w, 2);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            c(i * w + j, 0) = (j + 0.5) / w;
            c(i * w + j, 1) = (i + 0.5) / h;
        }
    return c;
}

GazePoint spatial_softmax(const Heatmap& map, double temperature) {
    if (!(temperature > 0) || !std::isfinite(temperature)) throw InvalidInput("temperature must be positive");
    if (map.values.size() == 0) throw InvalidInput("empty heatmap");
    if (!map.values.allFinite()) throw InvalidInput("heatmap contains non-finite values");
    Mat p = (map.values.array() - map.values.maxCoeff()) / temperature;
    p = p.array().exp();
    p /= p.sum();
    const Eigen::VectorXd col_marginal = p.colwise().sum().transpose();
    const Eigen::VectorXd row_marginal = p.rowwise().sum();
    return {expected_coordinate(col_marginal), expected_coordinate(row_marginal)};
}

Var spatial_softmax(Var logits, int h, int w, double temperature) {
    if (!(temperature > 0)) throw InvalidInput("temperature must be positive");
    if (logits.cols() != static_cast<Eigen::Index>(h) * w) throw InvalidInput("logit width does not match the grid");
    Tape& tape = *logits.tape();
    Var p = ad::softmax_rows(ad::scale(logits, 1.0 / temperature));
    return ad::matmul(p, tape.constant(cell_centers(h, w)));
}

void GazePredictorConfig::validate() const {
    if (input_downscale < 1) throw InvalidInput("input_downscale must be positive");
    if (image_width % (input_downscale * 4) || image_height % (input_downscale * 4))
        throw InvalidInput("image size must be divisible by 4 * input_downscale");
    if (grid_width() < 8 || grid_height() < 8) throw InvalidInput("heatmap grid must be at least 8x8");
    if (enc1 < 1 || enc2 < 1 || enc3 < 1 || dec < 1) throw InvalidInput("channel counts must be positive");
    if (!(temperature > 0) || !std::isfinite(temperature)) throw InvalidInput("temperature must be positive");
}

GazePredictor::GazePredictor(const GazePredictorConfig& config) : config_(config) {
    config.validate();
    Rng rng(config.seed);
    conv1_ = nn::Linear(store_, "gaze.conv1", 9 * 3, config.enc1, rng);
    conv2_ = nn::Linear(store_, "gaze.conv2", 9 * config.enc1, config.enc2, rng);
    conv3_ = nn::Linear(store_, "gaze.conv3", 9 * config.enc2, config.enc3, rng);
    conv4_ = nn::Linear(store_, "gaze.conv4", 9 * (config.enc3 + config.enc2), config.dec, rng);
    head_ = nn::Linear(store_, "gaze.head", config.dec, 1, rng);
    for (nn::Linear* l : {&conv1_, &conv2_, &conv3_, &conv4_}) he_init(*l, rng);
    if (config.position_bias)
        bias_map_ = &store_.add("gaze.position_bias", Mat::Zero(1, config.grid_height() * config.grid_width()));
}

Mat GazePredictor::prepare(const ImageBuffer& image) const {
    if (image.channels() != 3) throw InvalidInput("gaze predictor expects RGB images");
    const ImageBuffer& sized = image.width() == config_.image_width && image.height() == config_.image_height
                                   ? image
                                   : resize_bilinear(image, config_.image_width, config_.image_height);
    const ImageBuffer small = downscale_area(sized, config_.input_downscale);
    Mat out(static_cast<Eigen::Index>(small.width()) * small.height(), 3);
    const auto d = small.data();
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (int c = 0; c < 3; ++c) out(i, c) = d[static_cast<std::size_t>(i) * 3 + c];
    return out;
}

Var GazePredictor::logits(Tape& tape, const Mat& inputs, int batch) const {
    const int h = config_.input_height(), w = config_.input_width();
    if (inputs.rows() != static_cast<Eigen::Index>(batch) * h * w || inputs.cols() != 3)
        throw InvalidInput("prepared gaze input has the wrong shape");
    auto conv = [&](const nn::Linear& l, Var x, int hh, int ww) {
        return ad::relu(l(tape, ad::im2col(x, batch, hh, ww, 3)));
    };
    Var e1 = conv(conv1_, tape.constant(inputs), h, w);
    Var e2 = conv(conv2_, ad::avg_pool2(e1, batch, h, w), h / 2, w / 2);
    Var e3 = conv(conv3_, ad::avg_pool2(e2, batch, h / 2, w / 2), h / 4, w / 4);
    Var parts[] = {ad::upsample2(e3, batch, h / 4, w / 4), e2};
    Var d = conv(conv4_, ad::concat_cols(parts), h / 2, w / 2);
    Var out = ad::reshape(head_(tape, d), batch, (h / 2) * (w / 2));
    if (bias_map_) {
        std::vector<int> rows(static_cast<std::size_t>(batch), 0);
        out = out + ad::gather_rows(tape.param(*bias_map_), std::move(rows));
    }
    return out;
}

Heatmap GazePredictor::heatmap(const ImageBuffer& image) const {
    Tape tape(false);
    const Mat& v = logits(tape, prepare(image), 1).value();
    Heatmap map;
    map.values = Eigen::Map<const Mat>(v.data(), config_.grid_height(), config_.grid_width());
    return map;
}

GazePoint GazePredictor::predict(const ImageBuffer& image) const {
    return spatial_softmax(heatmap(image), config_.temperature);
}

std::vector<double> train_gaze_predictor(GazePredictor& predictor, const std::vector<GazeExample>& data,
                                         const GazeTrainOptions& options) {
    if (data.empty()) throw InvalidInput("gaze training needs data");
    if (options.batch < 1 || options.steps < 0 || !(options.lr > 0)) throw InvalidInput("invalid gaze training options");
    std::vector<Mat> inputs;
    inputs.reserve(data.size());
    for (const auto& ex : data) inputs.push_back(predictor.prepare(ex.image));
    const auto& cfg = predictor.config();
    const Eigen::Index px = inputs.front().rows();

    ParamStore& store = predictor.params();
    nn::Adam adam(store);
    Rng rng(options.seed);
    std::vector<double> losses;
    for (int step = 0; step < options.steps; ++step) {
        Mat batch_in(px * options.batch, 3);
        Mat labels(options.batch, 2);
        for (int b = 0; b < options.batch; ++b) {
            const std::size_t k = rng() % data.size();
            batch_in.middleRows(b * px, px) = inputs[k];
            labels(b, 0) = data[k].gaze.x();
            labels(b, 1) = data[k].gaze.y();
        }
        store.zero_grad();
        Tape tape;
        Var kp = spatial_softmax(predictor.logits(tape, batch_in, options.batch), cfg.grid_height(), cfg.grid_width(),
                                 cfg.temperature);
        Var loss = ad::mse(kp, labels);
        const double value = loss.value()(0, 0);
        if (!std::isfinite(value)) throw DivergenceError("gaze predictor loss became non-finite at step " + std::to_string(step));
        tape.backward(loss);
        nn::clip_grad_norm(store, 1.0);
        adam.step(store, nn::cosine_lr(options.lr, step, options.steps));
        losses.push_back(value);
    }
    return losses;
}

double mean_gaze_error(const GazePredictor& predictor, const std::vector<GazeExample>& data) {
    if (data.empty()) throw InvalidInput("no evaluation data");
    double total = 0.0;
    for (const auto& ex : data) {
        const GazePoint p = predictor.predict(ex.image);
        total += std::hypot(p.x() - ex.gaze.x(), p.y() - ex.gaze.y());
    }
    return total / static_cast<double>(data.size());
}

bool inside_fovea(const GazePoint& fixation, const GazePoint& point) {
    static const fovea::TokenizationPattern pattern = fovea::build_pattern(fovea::PatternKind::Foveated);
    const PixelCoord off = fovea::gaze_offset(fixation, pattern);
    const PixelCoord p = gaze_to_pixel(point, pattern.canvas_width, pattern.canvas_height);
    const int x = p.x - off.x, y = p.y - off.y;
    for (const auto& s : pattern.patches)
        if (s.level == 0 && x >= s.origin_x && x < s.origin_x + s.size && y >= s.origin_y && y < s.origin_y + s.size)
            return true;
    return false;
}

double fovea_hit_rate(const GazePredictor& predictor, const std::vector<GazeExample>& data) {
    if (data.empty()) throw InvalidInput("no evaluation data");
    int hits = 0;
    for (const auto& ex : data) hits += inside_fovea(predictor.predict(ex.image), ex.gaze);
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

GazePoint merge_gaze(const GazePoint& left, const GazePoint& right) {
    return {0.5 * (left.x() + right.x()), 0.5 * (left.y() + right.y())};
}

RowVec append_gaze(const RowVec& proprio, const GazePoint& gaze) {
    RowVec out(proprio.cols() + 2);
    out << proprio, gaze.x(), gaze.y();
    return out;
}

namespace {

fovea::TokenizedImage foveate(const ImageBuffer& image, const GazePoint& gaze) {
    static const fovea::TokenizationPattern pattern = fovea::build_pattern(fovea::PatternKind::Foveated);
    return fovea::tokenize(fovea::fit_to_canvas(image, pattern), pattern, gaze);
}

}  // namespace

GazeStep two_stage_step(const ImageBuffer& image, const RowVec& proprio, const GazePredictor& predictor,
                        const policy::FlowPolicy& policy, std::uint64_t seed) {
    GazeStep step;
    step.gaze = predictor.predict(image);
    step.trajectory = {step.gaze};
    step.tokens = foveate(image, step.gaze);
    const auto obs = policy.encode(policy.config().use_image ? &step.tokens : nullptr, append_gaze(proprio, step.gaze));
    step.chunk = policy::euler_sample(policy, obs, policy.config().flow_steps, seed);
    return step;
}

GazeStep gaze_as_action_step(const ImageBuffer& image, const RowVec& proprio, GazeHistory& history,
                             const policy::FlowPolicy& policy, std::uint64_t seed) {
    if (policy.config().action_dim < 3) throw InvalidInput("gaze-as-action needs gaze columns in the action space");
    GazeStep step;
    step.gaze = history.last();
    step.tokens = foveate(image, step.gaze);
    const auto obs = policy.encode(policy.config().use_image ? &step.tokens : nullptr, append_gaze(proprio, step.gaze));
    step.chunk = policy::euler_sample(policy, obs, policy.config().flow_steps, seed);
    const Mat& a = step.chunk.actions;
    const Eigen::Index gx = a.cols() - 2;
    for (Eigen::Index r = 0; r < a.rows(); ++r) step.trajectory.emplace_back(a(r, gx), a(r, gx + 1));
    history.update(step.trajectory.front());
    return step;
}

std::string_view to_string(GazeSource source) {
    switch (source) {
        case GazeSource::Human: return "human";
        case GazeSource::Unet: return "unet";
        case GazeSource::Policy: return "policy";
    }
    return "human";
}

void write_gaze_csv(const std::vector<GazeLogRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.precision(17);
    out << "frame_id,x,y,source\n";
    for (const auto& r : rows) out << r.frame_id << ',' << r.gaze.x() << ',' << r.gaze.y() << ',' << to_string(r.source) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<GazeLogRow> read_gaze_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "frame_id,x,y,source") throw IoError(path.string() + ": bad gaze CSV header");
    std::vector<GazeLogRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string id, x, y, src;
        if (!std::getline(ss, id, ',') || !std::getline(ss, x, ',') || !std::getline(ss, y, ',') || !std::getline(ss, src))
            throw IoError(path.string() + ": malformed row '" + line + "'");
        GazeLogRow r;
        try {
            r.frame_id = std::stol(id);
            r.gaze = GazePoint(std::stod(x), std::stod(y));
        } catch (const std::exception&) {
            throw IoError(path.string() + ": malformed row '" + line + "'");
        }
        if (src == "human") r.source = GazeSource::Human;
        else if (src == "unet") r.source = GazeSource::Unet;
        else if (src == "policy") r.source = GazeSource::Policy;
        else throw IoError(path.string() + ": unknown gaze source '" + src + "'");
        rows.push_back(r);
    }
    return rows;
}

void write_heatmap_png(const Heatmap& map, const std::filesystem::path& path, double temperature, int scale) {
    if (scale < 1) throw InvalidInput("scale must be positive");
    if (!map.values.allFinite() || map.values.size() == 0) throw InvalidInput("heatmap contains non-finite values");
    Mat p = ((map.values.array() - map.values.maxCoeff()) / temperature).exp();
    p /= p.maxCoeff();
    ImageBuffer img(map.width() * scale, map.height() * scale, 1);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) img.at(x, y, 0) = p(y / scale, x / scale);
    write_png(img, path);
}

}  // namespace gazevit::gaze
