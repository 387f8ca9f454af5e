#include "gazevit/fovea.hpp"

#include <charconv>
#include <sstream>

#include "gazevit/errors.hpp"

namespace gazevit::fovea {

std::string_view to_string(PatternKind kind) {
    switch (kind) {
        case PatternKind::Foveated: return "foveated";
        case PatternKind::Fine: return "fine";
        case PatternKind::Coarse: return "coarse";
    }
    return "unknown";
}

PatternKind parse_kind(std::string_view name) {
    if (name == "foveated") return PatternKind::Foveated;
    if (name == "fine") return PatternKind::Fine;
    if (name == "coarse") return PatternKind::Coarse;
    throw InvalidInput("unknown pattern kind '" + std::string(name) + "'");
}

namespace {

void add_grid(std::vector<PatchSpec>& out, int x0, int y0, int rows, int cols, int size,
              int level, bool skip_centre) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (skip_centre && r == rows / 2 && c == cols / 2) continue;
            out.push_back({x0 + c * size, y0 + r * size, size, level});
        }
}

}  // namespace

TokenizationPattern build_pattern(PatternKind kind) {
    TokenizationPattern p;
    p.kind = kind;
    switch (kind) {
        case PatternKind::Foveated:
            p.canvas_width = p.canvas_height = 288;
            p.base_patch = 16;
            add_grid(p.patches, 128, 128, 2, 2, 16, 0, false);
            add_grid(p.patches, 96, 96, 3, 3, 32, 1, true);
            add_grid(p.patches, 0, 0, 3, 3, 96, 2, true);
            break;
        case PatternKind::Fine:
            p.canvas_width = p.canvas_height = 288;
            p.base_patch = 16;
            add_grid(p.patches, 0, 0, 18, 18, 16, 0, false);
            break;
        case PatternKind::Coarse:
            p.canvas_width = 320;
            p.canvas_height = 256;
            p.base_patch = 64;
            add_grid(p.patches, 0, 0, 4, 5, 64, 0, false);
            break;
    }
    return p;
}

std::vector<int> coverage_counts(const TokenizationPattern& pattern) {
    std::vector<int> counts(static_cast<std::size_t>(pattern.canvas_width) * pattern.canvas_height, 0);
    for (const auto& patch : pattern.patches)
        for (int y = patch.origin_y; y < patch.origin_y + patch.size; ++y)
            for (int x = patch.origin_x; x < patch.origin_x + patch.size; ++x) {
                if (x < 0 || y < 0 || x >= pattern.canvas_width || y >= pattern.canvas_height)
                    throw InvalidInput("patch exceeds canvas bounds");
                ++counts[static_cast<std::size_t>(y) * pattern.canvas_width + x];
            }
    return counts;
}

std::string serialize_pattern(const TokenizationPattern& pattern) {
    std::ostringstream os;
    os << "kind " << to_string(pattern.kind) << '\n'
       << "canvas " << pattern.canvas_width << ' ' << pattern.canvas_height << '\n'
       << "base_patch " << pattern.base_patch << '\n'
       << "patches " << pattern.patches.size() << '\n'
       << "level,x,y,size\n";
    for (const auto& p : pattern.patches)
        os << p.level << ',' << p.origin_x << ',' << p.origin_y << ',' << p.size << '\n';
    return os.str();
}

namespace {

int parse_int(std::string_view s) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw InvalidInput("malformed integer '" + std::string(s) + "' in pattern text");
    return v;
}

}  // namespace

TokenizationPattern parse_pattern(std::string_view text) {
    std::istringstream is{std::string(text)};
    TokenizationPattern p;
    std::string key, kind;
    std::size_t count = 0;
    if (!(is >> key >> kind) || key != "kind") throw InvalidInput("pattern text: expected 'kind'");
    p.kind = parse_kind(kind);
    if (!(is >> key >> p.canvas_width >> p.canvas_height) || key != "canvas")
        throw InvalidInput("pattern text: expected 'canvas'");
    if (!(is >> key >> p.base_patch) || key != "base_patch")
        throw InvalidInput("pattern text: expected 'base_patch'");
    if (!(is >> key >> count) || key != "patches")
        throw InvalidInput("pattern text: expected 'patches'");
    std::string line;
    if (!(is >> line) || line != "level,x,y,size")
        throw InvalidInput("pattern text: expected column header");
    while (is >> line) {
        std::string_view sv = line;
        int fields[4];
        for (int i = 0; i < 4; ++i) {
            auto comma = sv.find(',');
            if ((i < 3) == (comma == std::string_view::npos))
                throw InvalidInput("pattern text: malformed row '" + line + "'");
            fields[i] = parse_int(sv.substr(0, comma));
            if (comma != std::string_view::npos) sv.remove_prefix(comma + 1);
        }
        p.patches.push_back({fields[1], fields[2], fields[3], fields[0]});
    }
    if (p.patches.size() != count) throw InvalidInput("pattern text: patch count mismatch");
    return p;
}

ImageBuffer shift_image(const ImageBuffer& image, int dx, int dy) {
    ImageBuffer out(image.width(), image.height(), image.channels());
    const int ch = image.channels();
    for (int y = 0; y < image.height(); ++y) {
        const int sy = y + dy;
        if (sy < 0 || sy >= image.height()) continue;
        const int x_begin = std::max(0, -dx);
        const int x_end = std::min(image.width(), image.width() - dx);
        for (int x = x_begin; x < x_end; ++x)
            for (int c = 0; c < ch; ++c) out.at(x, y, c) = image.at(x + dx, sy, c);
    }
    return out;
}

PixelCoord gaze_offset(const GazePoint& gaze, const TokenizationPattern& pattern) {
    const PixelCoord g = gaze_to_pixel(gaze, pattern.canvas_width, pattern.canvas_height);
    return {g.x - pattern.canvas_width / 2, g.y - pattern.canvas_height / 2};
}

static void check_canvas(const ImageBuffer& image, const TokenizationPattern& pattern) {
    if (image.width() != pattern.canvas_width || image.height() != pattern.canvas_height ||
        image.channels() != 3)
        throw InvalidInput("image is " + std::to_string(image.width()) + "x" +
                           std::to_string(image.height()) + "x" + std::to_string(image.channels()) +
                           ", pattern canvas is " + std::to_string(pattern.canvas_width) + "x" +
                           std::to_string(pattern.canvas_height) + "x3");
}

ImageBuffer shift_for_gaze(const ImageBuffer& image, const GazePoint& gaze,
                           const TokenizationPattern& pattern) {
    check_canvas(image, pattern);
    const PixelCoord off = gaze_offset(gaze, pattern);
    return shift_image(image, off.x, off.y);
}

TokenizedImage tokenize(const ImageBuffer& image, const TokenizationPattern& pattern,
                        std::optional<GazePoint> gaze) {
    check_canvas(image, pattern);
    TokenizedImage out;
    out.pattern = pattern;
    const int side = pattern.base_patch;
    out.tokens.resize(static_cast<Eigen::Index>(pattern.patches.size()), side * side * 3);

    const ImageBuffer* src = &image;
    ImageBuffer shifted;
    if (pattern.kind == PatternKind::Foveated) {
        if (!gaze) throw InvalidInput("foveated tokenization requires a gaze point");
        shifted = shift_for_gaze(image, *gaze, pattern);
        src = &shifted;
        out.gaze = gaze;
    }

    for (std::size_t i = 0; i < pattern.patches.size(); ++i) {
        const PatchSpec& p = pattern.patches[i];
        if (p.size % side != 0) throw InvalidInput("patch size is not a multiple of the token side");
        const int k = p.size / side;
        const double inv = 1.0 / (k * k);
        auto row = out.tokens.row(static_cast<Eigen::Index>(i));
        for (int ty = 0; ty < side; ++ty)
            for (int tx = 0; tx < side; ++tx)
                for (int c = 0; c < 3; ++c) {
                    double acc = 0.0;
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx)
                            acc += src->at(p.origin_x + tx * k + dx, p.origin_y + ty * k + dy, c);
                    row((ty * side + tx) * 3 + c) = k == 1 ? acc : acc * inv;
                }
    }
    return out;
}

ImageBuffer assemble(const TokenizedImage& t) {
    const TokenizationPattern& pattern = t.pattern;
    const int side = pattern.base_patch;
    if (t.tokens.rows() != static_cast<Eigen::Index>(pattern.patches.size()) ||
        t.tokens.cols() != side * side * 3)
        throw InvalidInput("token matrix does not match its pattern");

    ImageBuffer canvas(pattern.canvas_width, pattern.canvas_height, 3);
    for (std::size_t i = 0; i < pattern.patches.size(); ++i) {
        const PatchSpec& p = pattern.patches[i];
        const int k = p.size / side;
        auto row = t.tokens.row(static_cast<Eigen::Index>(i));
        for (int y = 0; y < p.size; ++y)
            for (int x = 0; x < p.size; ++x)
                for (int c = 0; c < 3; ++c)
                    canvas.at(p.origin_x + x, p.origin_y + y, c) = row(((y / k) * side + x / k) * 3 + c);
    }
    if (pattern.kind != PatternKind::Foveated || !t.gaze) return canvas;
    const PixelCoord off = gaze_offset(*t.gaze, pattern);
    return shift_image(canvas, -off.x, -off.y);
}

ImageBuffer fit_to_canvas(const ImageBuffer& image, const TokenizationPattern& pattern) {
    if (image.width() == pattern.canvas_width && image.height() == pattern.canvas_height) return image;
    return resize_bilinear(image, pattern.canvas_width, pattern.canvas_height);
}

}  // namespace gazevit::fovea
