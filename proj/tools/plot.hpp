#pragma once

#include <array>
#include <vector>

#include "gazevit/image.hpp"

namespace gazevit::cli {

using Rgb = std::array<double, 3>;

// Colour cycle used for levels and series.
Rgb palette(int index);

// One-pixel outline, clipped to the image.
void draw_rect(ImageBuffer& image, int x0, int y0, int width, int height, const Rgb& colour, int thickness = 1);
void draw_line(ImageBuffer& image, double x0, double y0, double x1, double y1, const Rgb& colour);
void draw_cross(ImageBuffer& image, int cx, int cy, int half, const Rgb& colour);

struct Series {
    std::vector<double> x;
    std::vector<double> y;
};

/// Axis-framed line chart without labels. Non-finite points are skipped;
/// with log_y every y must be positive.
ImageBuffer line_chart(const std::vector<Series>& series, int width = 640, int height = 400, bool log_y = false);

// Images side by side on a white background with a fixed gutter.
ImageBuffer hconcat(const std::vector<ImageBuffer>& images, int gutter = 4);
ImageBuffer vconcat(const std::vector<ImageBuffer>& images, int gutter = 4);

}  // namespace gazevit::cli
