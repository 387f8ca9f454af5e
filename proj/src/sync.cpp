#include "gazevit/sync.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "gazevit/errors.hpp"
#include "gazevit/png_io.hpp"

namespace gazevit::sync {

std::string_view to_string(Provenance p) { return p == Provenance::Measured ? "measured" : "interpolated"; }

std::string_view to_string(Jitter j) {
    switch (j) {
        case Jitter::None: return "none";
        case Jitter::Uniform: return "uniform";
        case Jitter::Exponential: return "exponential";
    }
    return "none";
}

Jitter parse_jitter(std::string_view name) {
    if (name == "none") return Jitter::None;
    if (name == "uniform") return Jitter::Uniform;
    if (name == "exponential") return Jitter::Exponential;
    throw InvalidInput("unknown jitter kind '" + std::string(name) + "' (expected none, uniform or exponential)");
}

std::string image_ref_for(long frame_id) { return "images/" + std::to_string(frame_id) + ".png"; }

std::vector<FrameRecord> make_frames(int count, double fps, long start_id) {
    if (count < 0 || !(fps > 0)) throw InvalidInput("frame count must be nonnegative and fps positive");
    std::vector<FrameRecord> frames(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) frames[i] = {start_id + i, i / fps, image_ref_for(start_id + i)};
    return frames;
}

namespace {

void check_frames(const std::vector<FrameRecord>& frames) {
    if (frames.empty()) throw InvalidInput("no frames");
    for (std::size_t i = 1; i < frames.size(); ++i) {
        if (frames[i].frame_id <= frames[i - 1].frame_id) throw InvalidInput("frame IDs must be strictly increasing");
        if (frames[i].t_emit < frames[i - 1].t_emit) throw InvalidInput("frame emission times must be nondecreasing");
    }
}

std::size_t frame_index(const std::vector<FrameRecord>& frames, long id) {
    auto it = std::lower_bound(frames.begin(), frames.end(), id,
                               [](const FrameRecord& f, long v) { return f.frame_id < v; });
    if (it == frames.end() || it->frame_id != id)
        throw InvalidInput("gaze sample references unknown frame " + std::to_string(id));
    return static_cast<std::size_t>(it - frames.begin());
}

GazePoint lerp(const GazePoint& a, const GazePoint& b, double s) {
    return {a.x() + (b.x() - a.x()) * s, a.y() + (b.y() - a.y()) * s};
}

GazePoint merged(const GazePoint& l, const GazePoint& r) { return {0.5 * (l.x() + r.x()), 0.5 * (l.y() + r.y())}; }

}  // namespace

std::vector<AlignedGaze> align_gaze(const std::vector<FrameRecord>& frames, const std::vector<GazeSample>& samples) {
    check_frames(frames);
    if (samples.empty()) throw InvalidInput("episode rejected: no gaze samples");
    std::vector<const GazeSample*> label(frames.size(), nullptr);
    for (const auto& s : samples) {
        const std::size_t i = frame_index(frames, s.frame_id);
        if (!label[i] || s.t_arrive < label[i]->t_arrive) label[i] = &s;
    }
    std::vector<std::size_t> labeled;
    for (std::size_t i = 0; i < frames.size(); ++i)
        if (label[i]) labeled.push_back(i);

    std::vector<AlignedGaze> out(frames.size());
    std::size_t next = 0;  // first labeled position >= i
    for (std::size_t i = 0; i < frames.size(); ++i) {
        while (next < labeled.size() && labeled[next] < i) ++next;
        AlignedGaze& a = out[i];
        a.frame_id = frames[i].frame_id;
        if (label[i]) {
            a.left = label[i]->left;
            a.right = label[i]->right;
            a.provenance = Provenance::Measured;
            continue;
        }
        a.provenance = Provenance::Interpolated;
        if (next == 0 || next == labeled.size()) {
            const GazeSample* hold = label[next == 0 ? labeled.front() : labeled.back()];
            a.left = hold->left;
            a.right = hold->right;
            continue;
        }
        const std::size_t p = labeled[next - 1], n = labeled[next];
        const double s = static_cast<double>(frames[i].frame_id - frames[p].frame_id) /
                         static_cast<double>(frames[n].frame_id - frames[p].frame_id);
        a.left = lerp(label[p]->left, label[n]->left, s);
        a.right = lerp(label[p]->right, label[n]->right, s);
    }
    return out;
}

void LatencyModel::validate() const {
    if (!(base_delay >= 0) || !std::isfinite(base_delay)) throw InvalidInput("base delay must be nonnegative");
    if (!(jitter_scale >= 0) || !std::isfinite(jitter_scale)) throw InvalidInput("jitter scale must be nonnegative");
    if (!(drop_probability >= 0 && drop_probability < 1)) throw InvalidInput("drop probability must lie in [0,1)");
}

std::vector<GazeSample> simulate_stream(const std::vector<FrameRecord>& frames, const GazeFunction& gaze,
                                        const LatencyModel& latency, std::uint64_t seed) {
    latency.validate();
    std::mt19937_64 drop_rng(seed);
    std::mt19937_64 delay_rng(seed ^ 0xd1b54a32d192ed03ULL);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<GazeSample> out;
    for (const auto& f : frames) {
        const bool dropped = unif(drop_rng) < latency.drop_probability;
        double delay = latency.base_delay;
        const double u = unif(delay_rng);
        if (latency.jitter == Jitter::Uniform) delay += latency.jitter_scale * u;
        if (latency.jitter == Jitter::Exponential) delay += -latency.jitter_scale * std::log1p(-u);
        if (dropped) continue;
        const auto [left, right] = gaze(f.t_emit);
        out.push_back({f.frame_id, left, right, f.t_emit + delay});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const GazeSample& a, const GazeSample& b) { return a.t_arrive < b.t_arrive; });
    return out;
}

GazePoint SinusoidGaze::operator()(double t) const {
    const double phase = 2.0 * std::numbers::pi * frequency * t;
    return {center + amplitude * std::sin(phase), center + amplitude * std::cos(phase)};
}

std::pair<GazePoint, GazePoint> SinusoidGaze::eyes(double t) const {
    const GazePoint g = (*this)(t);
    return {GazePoint(g.x() - eye_offset, g.y()), GazePoint(g.x() + eye_offset, g.y())};
}

AlignmentError alignment_error(const std::vector<FrameRecord>& frames, const std::vector<AlignedGaze>& aligned,
                               const GazeFunction& truth) {
    if (frames.size() != aligned.size()) throw InvalidInput("aligned gaze does not cover the frames");
    AlignmentError e;
    std::ptrdiff_t first = -1, last = -1;
    for (std::size_t i = 0; i < aligned.size(); ++i)
        if (aligned[i].provenance == Provenance::Measured) {
            if (first < 0) first = static_cast<std::ptrdiff_t>(i);
            else e.max_gap = std::max(e.max_gap, static_cast<int>(frames[i].frame_id - frames[last].frame_id));
            last = static_cast<std::ptrdiff_t>(i);
        }
    double sum = 0.0;
    for (std::size_t i = 0; i < aligned.size(); ++i) {
        const auto [tl, tr] = truth(frames[i].t_emit);
        const GazePoint want = merged(tl, tr);
        const GazePoint got = merged(aligned[i].left, aligned[i].right);
        const double err = std::hypot(got.x() - want.x(), got.y() - want.y());
        const auto si = static_cast<std::ptrdiff_t>(i);
        if (aligned[i].provenance == Provenance::Measured) {
            ++e.measured_frames;
        } else if (si > first && si < last) {
            ++e.interpolated_frames;
            e.max_error = std::max(e.max_error, err);
            sum += err;
        } else {
            ++e.hold_frames;
            e.max_hold_error = std::max(e.max_hold_error, err);
        }
    }
    e.mean_error = e.interpolated_frames ? sum / e.interpolated_frames : 0.0;
    return e;
}

std::vector<GazeSample> decimate(const std::vector<GazeSample>& samples, int gap) {
    if (gap < 1) throw InvalidInput("gap must be at least 1");
    std::vector<GazeSample> out;
    for (const auto& s : samples)
        if (s.frame_id % gap == 0) out.push_back(s);
    return out;
}

bool EpisodeRow::operator==(const EpisodeRow& o) const {
    return frame_id == o.frame_id && image_ref == o.image_ref && joints.size() == o.joints.size() &&
           action.size() == o.action.size() && joints == o.joints && action == o.action && gaze_left == o.gaze_left &&
           gaze_right == o.gaze_right && provenance == o.provenance;
}

EpisodeLog record_episode(const std::vector<FrameRecord>& frames, const std::vector<AlignedGaze>& gaze,
                          const Mat& joints, const Mat& actions, double rate) {
    check_frames(frames);
    if (!(rate > 0)) throw InvalidInput("rate must be positive");
    const auto n = static_cast<Eigen::Index>(frames.size());
    if (static_cast<Eigen::Index>(gaze.size()) != n || joints.rows() != n || actions.rows() != n)
        throw InvalidInput("column length mismatch: frames " + std::to_string(n) + ", gaze " +
                           std::to_string(gaze.size()) + ", joints " + std::to_string(joints.rows()) + ", actions " +
                           std::to_string(actions.rows()));
    EpisodeLog log;
    log.rate = rate;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& f = frames[i];
        if (i > 0 && f.frame_id != frames[i - 1].frame_id + 1) throw InvalidInput("episode frame IDs must be gap-free");
        if (gaze[i].frame_id != f.frame_id) throw InvalidInput("gaze column is not aligned with the frames");
        log.rows.push_back({f.frame_id, image_ref_for(f.frame_id), joints.row(i), actions.row(i), gaze[i].left,
                            gaze[i].right, gaze[i].provenance});
    }
    return log;
}

namespace {

constexpr int kSchemaVersion = 1;

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint64_t get_u64(const std::string& buf, std::size_t& pos) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
}
void put_f64(std::string& buf, double v) { put_u64(buf, std::bit_cast<std::uint64_t>(v)); }
double get_f64(const std::string& buf, std::size_t& pos) { return std::bit_cast<double>(get_u64(buf, pos)); }

struct Column {
    std::string name, type;
    int width;
};

std::size_t type_size(const std::string& t) {
    if (t == "i64" || t == "f64") return 8;
    if (t == "u8") return 1;
    throw IoError("unknown column type '" + t + "'");
}

}  // namespace

void write_episode(const EpisodeLog& log, const std::filesystem::path& dir, const std::vector<ImageBuffer>* images) {
    if (log.rows.empty()) throw InvalidInput("cannot write an empty episode");
    const int jw = static_cast<int>(log.rows.front().joints.size());
    const int aw = static_cast<int>(log.rows.front().action.size());
    for (std::size_t i = 0; i < log.rows.size(); ++i) {
        const auto& r = log.rows[i];
        if (r.joints.size() != jw || r.action.size() != aw) throw InvalidInput("episode rows have inconsistent widths");
        if (i > 0 && r.frame_id != log.rows[i - 1].frame_id + 1) throw InvalidInput("episode frame IDs must be gap-free");
    }
    if (images && images->size() != log.rows.size()) throw InvalidInput("one image per row is required");

    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    const std::vector<Column> cols = {{"frame_id", "i64", 1}, {"joints", "f64", jw},     {"action", "f64", aw},
                                      {"gaze_left", "f64", 2}, {"gaze_right", "f64", 2}, {"provenance", "u8", 1}};
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) throw IoError("cannot write " + (dir / "manifest.txt").string());
    manifest.precision(17);
    manifest << "gazevit-episode " << kSchemaVersion << "\nrate " << log.rate << "\nrows " << log.rows.size() << '\n';
    for (const auto& c : cols) manifest << "column " << c.name << ' ' << c.type << ' ' << c.width << '\n';
    if (!manifest) throw IoError("failed writing manifest");

    std::string buf;
    for (const auto& r : log.rows) put_u64(buf, static_cast<std::uint64_t>(r.frame_id));
    for (const auto& r : log.rows)
        for (int j = 0; j < jw; ++j) put_f64(buf, r.joints(j));
    for (const auto& r : log.rows)
        for (int j = 0; j < aw; ++j) put_f64(buf, r.action(j));
    for (const auto& r : log.rows) {
        put_f64(buf, r.gaze_left.x());
        put_f64(buf, r.gaze_left.y());
    }
    for (const auto& r : log.rows) {
        put_f64(buf, r.gaze_right.x());
        put_f64(buf, r.gaze_right.y());
    }
    for (const auto& r : log.rows) buf.push_back(static_cast<char>(r.provenance));
    std::ofstream bin(dir / "columns.bin", std::ios::binary);
    if (!bin || !bin.write(buf.data(), static_cast<std::streamsize>(buf.size())))
        throw IoError("failed writing " + (dir / "columns.bin").string());

    if (images) {
        std::filesystem::create_directories(dir / "images", ec);
        if (ec) throw IoError("cannot create image directory: " + ec.message());
        for (std::size_t i = 0; i < images->size(); ++i) write_png((*images)[i], dir / log.rows[i].image_ref);
    }
}

EpisodeLog read_episode(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest) throw IoError("cannot open " + (dir / "manifest.txt").string());
    auto fail = [&](const std::string& what) -> IoError { return IoError("malformed episode manifest: " + what); };
    std::string key;
    int version = 0;
    if (!(manifest >> key >> version) || key != "gazevit-episode") throw fail("missing header");
    if (version != kSchemaVersion) throw fail("unsupported schema version " + std::to_string(version));
    EpisodeLog log;
    std::size_t rows = 0;
    if (!(manifest >> key >> log.rate) || key != "rate" || !(log.rate > 0)) throw fail("bad rate");
    if (!(manifest >> key >> rows) || key != "rows" || rows == 0) throw fail("bad row count");
    const std::vector<std::pair<std::string, std::string>> expected = {{"frame_id", "i64"}, {"joints", "f64"},
                                                                       {"action", "f64"},   {"gaze_left", "f64"},
                                                                       {"gaze_right", "f64"}, {"provenance", "u8"}};
    std::vector<Column> cols;
    std::size_t bytes = 0;
    for (const auto& [name, type] : expected) {
        Column c;
        if (!(manifest >> key >> c.name >> c.type >> c.width) || key != "column") throw fail("missing column " + name);
        if (c.name != name || c.type != type || c.width < 0) throw fail("unexpected column " + c.name);
        if ((name == "gaze_left" || name == "gaze_right") && c.width != 2) throw fail("gaze columns must have width 2");
        if ((name == "frame_id" || name == "provenance") && c.width != 1) throw fail(name + " must have width 1");
        bytes += type_size(c.type) * static_cast<std::size_t>(c.width) * rows;
        cols.push_back(c);
    }
    if (manifest >> key) throw fail("trailing content '" + key + "'");

    std::ifstream bin(dir / "columns.bin", std::ios::binary);
    if (!bin) throw IoError("cannot open " + (dir / "columns.bin").string());
    std::string buf((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    if (buf.size() != bytes)
        throw IoError("columns.bin has " + std::to_string(buf.size()) + " bytes, manifest implies " + std::to_string(bytes));

    const int jw = cols[1].width, aw = cols[2].width;
    log.rows.resize(rows);
    std::size_t pos = 0;
    for (auto& r : log.rows) {
        r.frame_id = static_cast<long>(get_u64(buf, pos));
        r.image_ref = image_ref_for(r.frame_id);
    }
    for (auto& r : log.rows) {
        r.joints.resize(jw);
        for (int j = 0; j < jw; ++j) r.joints(j) = get_f64(buf, pos);
    }
    for (auto& r : log.rows) {
        r.action.resize(aw);
        for (int j = 0; j < aw; ++j) r.action(j) = get_f64(buf, pos);
    }
    auto read_point = [&]() {
        const double x = get_f64(buf, pos);
        const double y = get_f64(buf, pos);
        if (!(x >= 0 && x <= 1 && y >= 0 && y <= 1)) throw IoError("columns.bin: gaze outside [0,1]");
        return GazePoint(x, y);
    };
    for (auto& r : log.rows) r.gaze_left = read_point();
    for (auto& r : log.rows) r.gaze_right = read_point();
    for (auto& r : log.rows) {
        const auto p = static_cast<unsigned char>(buf[pos++]);
        if (p > 1) throw IoError("columns.bin: bad provenance code " + std::to_string(p));
        r.provenance = static_cast<Provenance>(p);
    }
    for (std::size_t i = 1; i < rows; ++i)
        if (log.rows[i].frame_id != log.rows[i - 1].frame_id + 1) throw IoError("columns.bin: frame IDs are not gap-free");
    return log;
}

}  // namespace gazevit::sync
