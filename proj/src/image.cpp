#include "gazevit/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gazevit/errors.hpp"

namespace gazevit {

ImageBuffer::ImageBuffer(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
    if (width <= 0 || height <= 0 || channels <= 0)
        throw InvalidInput("image dimensions must be positive");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

ImageBuffer::ImageBuffer(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (width <= 0 || height <= 0 || channels <= 0)
        throw InvalidInput("image dimensions must be positive");
    if (data_.size() != static_cast<std::size_t>(width) * height * channels)
        throw InvalidInput("image data length " + std::to_string(data_.size()) +
                           " does not match " + std::to_string(width) + "x" +
                           std::to_string(height) + "x" + std::to_string(channels));
    for (double v : data_)
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw InvalidInput("image values must be finite and within [0,1]");
}

static double clamp_unit(double v) {
    if (!std::isfinite(v)) throw InvalidInput("gaze coordinate is not finite");
    return std::clamp(v, 0.0, 1.0);
}

GazePoint::GazePoint(double x, double y) : x_(clamp_unit(x)), y_(clamp_unit(y)) {}

PixelCoord gaze_to_pixel(const GazePoint& gaze, int width, int height) {
    if (width <= 0 || height <= 0) throw InvalidInput("pixel grid must be non-empty");
    auto conv = [](double g, int n) {
        return std::clamp(static_cast<int>(std::lround(g * n)), 0, n - 1);
    };
    return {conv(gaze.x(), width), conv(gaze.y(), height)};
}

GazePoint pixel_to_gaze(PixelCoord p, int width, int height) {
    if (width <= 0 || height <= 0) throw InvalidInput("pixel grid must be non-empty");
    return {static_cast<double>(p.x) / width, static_cast<double>(p.y) / height};
}

ImageBuffer resize_bilinear(const ImageBuffer& src, int width, int height) {
    ImageBuffer out(width, height, src.channels());
    const double sx = static_cast<double>(src.width()) / width;
    const double sy = static_cast<double>(src.height()) / height;
    for (int y = 0; y < height; ++y) {
        // Pixel-center alignment.
        double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, src.height() - 1);
        double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, src.width() - 1);
            double wx = fx - x0;
            for (int c = 0; c < src.channels(); ++c) {
                double top = src.at(x0, y0, c) * (1 - wx) + src.at(x1, y0, c) * wx;
                double bot = src.at(x0, y1, c) * (1 - wx) + src.at(x1, y1, c) * wx;
                out.at(x, y, c) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

ImageBuffer downscale_area(const ImageBuffer& src, int factor) {
    if (factor <= 0 || src.width() % factor != 0 || src.height() % factor != 0)
        throw InvalidInput("downscale factor must divide the image dimensions");
    const int w = src.width() / factor;
    const int h = src.height() / factor;
    ImageBuffer out(w, h, src.channels());
    const double inv = 1.0 / (factor * factor);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < src.channels(); ++c) {
                double acc = 0.0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx)
                        acc += src.at(x * factor + dx, y * factor + dy, c);
                out.at(x, y, c) = acc * inv;
            }
    return out;
}

}  // namespace gazevit
