#include "gazevit/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "gazevit/errors.hpp"

namespace gazevit {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw IoError(std::string("libpng: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

}  // namespace

void write_png(const ImageBuffer& image, const std::filesystem::path& path) {
    if (image.empty()) throw InvalidInput("cannot write an empty image");
    if (image.channels() != 1 && image.channels() != 3) throw InvalidInput("PNG output needs 1 or 3 channels");
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng initialisation failed");
    }
    const int w = image.width(), h = image.height(), c = image.channels();
    std::vector<png_byte> row(static_cast<std::size_t>(w) * c);
    try {
        png_init_io(png, file.get());
        png_set_IHDR(png, info, w, h, 8, c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x)
                for (int ch = 0; ch < c; ++ch)
                    row[static_cast<std::size_t>(x) * c + ch] =
                        static_cast<png_byte>(std::lround(std::clamp(image.at(x, y, ch), 0.0, 1.0) * 255.0));
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
}

ImageBuffer read_png(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8)) throw IoError(path.string() + " is not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng initialisation failed");
    }
    std::vector<double> data;
    int w = 0, h = 0;
    try {
        png_init_io(png, file.get());
        png_set_sig_bytes(png, 8);
        png_read_info(png, info);
        w = static_cast<int>(png_get_image_width(png, info));
        h = static_cast<int>(png_get_image_height(png, info));
        const int color = png_get_color_type(png, info);
        if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
        if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        png_read_update_info(png, info);
        std::vector<png_byte> row(png_get_rowbytes(png, info));
        data.reserve(static_cast<std::size_t>(w) * h * 3);
        for (int y = 0; y < h; ++y) {
            png_read_row(png, row.data(), nullptr);
            for (int i = 0; i < w * 3; ++i) data.push_back(row[i] / 255.0);
        }
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return ImageBuffer(w, h, 3, std::move(data));
}

}  // namespace gazevit
