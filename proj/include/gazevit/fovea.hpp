#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gazevit/image.hpp"
#include "gazevit/tensor.hpp"

namespace gazevit::fovea {

enum class PatternKind { Foveated, Fine, Coarse };

std::string_view to_string(PatternKind kind);
PatternKind parse_kind(std::string_view name);

struct PatchSpec {
    int origin_x = 0;
    int origin_y = 0;
    int size = 0;
    int level = 0;
    bool operator==(const PatchSpec&) const = default;
};

/// Ordered set of square patches that tiles a fixed canvas.
///
/// Foveated: 288x288 canvas. Level 0 is a 2x2 block of 16 px patches at the
/// centre, level 1 the ring of eight 32 px patches around it (96x96 extent),
/// level 2 the ring of eight 96 px patches filling the canvas. Fine is an
/// 18x18 grid of 16 px patches on the same canvas. Coarse is a 4x5 grid of
/// 64 px patches on a 320 wide, 256 high canvas.
///
/// Patches are ordered level-major, then row-major within a level.
struct TokenizationPattern {
    PatternKind kind = PatternKind::Foveated;
    int canvas_width = 0;
    int canvas_height = 0;
    int base_patch = 16;  // side of every token block after resampling
    std::vector<PatchSpec> patches;

    std::size_t token_count() const { return patches.size(); }
    int token_values() const { return base_patch * base_patch * 3; }
    bool operator==(const TokenizationPattern&) const = default;
};

TokenizationPattern build_pattern(PatternKind kind);

// Per-pixel count of covering patches; every entry is 1 for a valid pattern.
std::vector<int> coverage_counts(const TokenizationPattern& pattern);

// Text form: header lines, then one `level,x,y,size` row per patch.
std::string serialize_pattern(const TokenizationPattern& pattern);
TokenizationPattern parse_pattern(std::string_view text);

/// Shifts the image so the gaze pixel lands on the canvas centre, padding
/// with zeros. The shift is quantized to whole pixels.
ImageBuffer shift_for_gaze(const ImageBuffer& image, const GazePoint& gaze,
                           const TokenizationPattern& pattern);

// Integer offset (dx, dy) such that output(x, y) = input(x + dx, y + dy).
PixelCoord gaze_offset(const GazePoint& gaze, const TokenizationPattern& pattern);

ImageBuffer shift_image(const ImageBuffer& image, int dx, int dy);

struct TokenizedImage {
    TokenizationPattern pattern;
    // One row per patch: base_patch x base_patch x 3 values, row-major HWC.
    Mat tokens;
    std::optional<GazePoint> gaze;
};

/// Foveated images are shifted to the gaze and every patch is area-averaged
/// down to base_patch; Fine and Coarse patches are copied verbatim.
TokenizedImage tokenize(const ImageBuffer& image, const TokenizationPattern& pattern,
                        std::optional<GazePoint> gaze = std::nullopt);

/// Paints tokens back into their rectangles (nearest-neighbour upsampling)
/// and undoes the gaze shift. Pixels shifted off the canvas come back as 0.
ImageBuffer assemble(const TokenizedImage& tokens);

// Bilinear resize to the pattern's canvas if needed.
ImageBuffer fit_to_canvas(const ImageBuffer& image, const TokenizationPattern& pattern);

}  // namespace gazevit::fovea
