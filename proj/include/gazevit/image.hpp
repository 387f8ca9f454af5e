#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gazevit {

/// Row-major interleaved image with intensities in [0,1].
class ImageBuffer {
public:
    ImageBuffer() = default;
    ImageBuffer(int width, int height, int channels = 3, double fill = 0.0);
    ImageBuffer(int width, int height, int channels, std::vector<double> data);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }

    double& at(int x, int y, int c) { return data_[index(x, y, c)]; }
    double at(int x, int y, int c) const { return data_[index(x, y, c)]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool empty() const { return data_.empty(); }
    bool operator==(const ImageBuffer&) const = default;

private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 3;
    std::vector<double> data_;
};

/// Normalized image coordinate; clamped to [0,1] on construction.
class GazePoint {
public:
    GazePoint() = default;
    GazePoint(double x, double y);

    double x() const { return x_; }
    double y() const { return y_; }
    bool operator==(const GazePoint&) const = default;

private:
    double x_ = 0.5;
    double y_ = 0.5;
};

struct PixelCoord {
    int x = 0;
    int y = 0;
    bool operator==(const PixelCoord&) const = default;
};

// round(g * size), clamped to a valid pixel index.
PixelCoord gaze_to_pixel(const GazePoint& gaze, int width, int height);
GazePoint pixel_to_gaze(PixelCoord p, int width, int height);

ImageBuffer resize_bilinear(const ImageBuffer& src, int width, int height);

// Exact block mean over factor x factor cells; dimensions must divide.
ImageBuffer downscale_area(const ImageBuffer& src, int factor);

}  // namespace gazevit
