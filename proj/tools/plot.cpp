#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gazevit/errors.hpp"

namespace gazevit::cli {

namespace {

void put(ImageBuffer& image, int x, int y, const Rgb& c) {
    if (x < 0 || y < 0 || x >= image.width() || y >= image.height()) return;
    for (int ch = 0; ch < std::min(3, image.channels()); ++ch) image.at(x, y, ch) = c[ch];
}

}  // namespace

Rgb palette(int index) {
    static const Rgb colours[] = {{0.90, 0.10, 0.10}, {0.10, 0.45, 0.90}, {0.10, 0.70, 0.20},
                                  {0.95, 0.60, 0.05}, {0.60, 0.20, 0.80}, {0.05, 0.70, 0.70}};
    return colours[static_cast<std::size_t>(index) % std::size(colours)];
}

void draw_rect(ImageBuffer& image, int x0, int y0, int width, int height, const Rgb& colour, int thickness) {
    for (int t = 0; t < thickness; ++t) {
        const int l = x0 + t, r = x0 + width - 1 - t, top = y0 + t, bottom = y0 + height - 1 - t;
        if (l > r || top > bottom) break;
        for (int x = l; x <= r; ++x) {
            put(image, x, top, colour);
            put(image, x, bottom, colour);
        }
        for (int y = top; y <= bottom; ++y) {
            put(image, l, y, colour);
            put(image, r, y, colour);
        }
    }
}

void draw_line(ImageBuffer& image, double x0, double y0, double x1, double y1, const Rgb& colour) {
    const int n = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
    for (int i = 0; i <= n; ++i) {
        const double s = static_cast<double>(i) / n;
        const int x = static_cast<int>(std::lround(x0 + s * (x1 - x0)));
        const int y = static_cast<int>(std::lround(y0 + s * (y1 - y0)));
        put(image, x, y, colour);
        put(image, x, y + 1, colour);
    }
}

void draw_cross(ImageBuffer& image, int cx, int cy, int half, const Rgb& colour) {
    for (int d = -half; d <= half; ++d) {
        put(image, cx + d, cy, colour);
        put(image, cx, cy + d, colour);
    }
}

ImageBuffer line_chart(const std::vector<Series>& series, int width, int height, bool log_y) {
    constexpr int margin = 24;
    ImageBuffer out(width, height, 3, 1.0);
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw InvalidInput("line_chart: x and y lengths differ");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (log_y && s.y[i] <= 0) throw InvalidInput("line_chart: log scale needs positive values");
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, ty(s.y[i]));
            ymax = std::max(ymax, ty(s.y[i]));
        }
    }
    const Rgb axis{0.3, 0.3, 0.3};
    draw_rect(out, margin, margin, width - 2 * margin, height - 2 * margin, axis);
    if (!std::isfinite(xmin)) return out;
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    const double pw = width - 2.0 * margin - 2, ph = height - 2.0 * margin - 2;
    auto px = [&](double x) { return margin + 1 + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return margin + 1 + (1.0 - (ty(y) - ymin) / (ymax - ymin)) * ph; };
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        bool have = false;
        double lx = 0, ly = 0;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
                have = false;
                continue;
            }
            const double x = px(s.x[i]), y = py(s.y[i]);
            if (have) draw_line(out, lx, ly, x, y, palette(static_cast<int>(k)));
            else put(out, static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y)), palette(static_cast<int>(k)));
            lx = x;
            ly = y;
            have = true;
        }
    }
    return out;
}

ImageBuffer hconcat(const std::vector<ImageBuffer>& images, int gutter) {
    int w = 0, h = 0;
    for (const auto& im : images) {
        w += im.width();
        h = std::max(h, im.height());
    }
    if (!images.empty()) w += gutter * static_cast<int>(images.size() - 1);
    ImageBuffer out(w, h, 3, 1.0);
    int x0 = 0;
    for (const auto& im : images) {
        for (int y = 0; y < im.height(); ++y)
            for (int x = 0; x < im.width(); ++x)
                for (int c = 0; c < 3; ++c) out.at(x0 + x, y, c) = im.at(x, y, im.channels() == 1 ? 0 : c);
        x0 += im.width() + gutter;
    }
    return out;
}

ImageBuffer vconcat(const std::vector<ImageBuffer>& images, int gutter) {
    int w = 0, h = 0;
    for (const auto& im : images) {
        h += im.height();
        w = std::max(w, im.width());
    }
    if (!images.empty()) h += gutter * static_cast<int>(images.size() - 1);
    ImageBuffer out(w, h, 3, 1.0);
    int y0 = 0;
    for (const auto& im : images) {
        for (int y = 0; y < im.height(); ++y)
            for (int x = 0; x < im.width(); ++x)
                for (int c = 0; c < 3; ++c) out.at(x, y0 + y, c) = im.at(x, y, im.channels() == 1 ? 0 : c);
        y0 += im.height() + gutter;
    }
    return out;
}

}  // namespace gazevit::cli
