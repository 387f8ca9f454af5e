#pragma once

#include <filesystem>

#include "gazevit/image.hpp"

namespace gazevit {

// 8-bit PNG, grayscale for one channel and RGB for three.
void write_png(const ImageBuffer& image, const std::filesystem::path& path);
// Always returns a three-channel image; gray and alpha inputs are converted.
ImageBuffer read_png(const std::filesystem::path& path);

}  // namespace gazevit
