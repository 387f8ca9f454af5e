#include <doctest.h>

#include <algorithm>
#include <random>

#include "gazevit/errors.hpp"
#include "gazevit/fovea.hpp"

using namespace gazevit;
using namespace gazevit::fovea;

namespace {

ImageBuffer random_image(int w, int h, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ImageBuffer img(w, h, 3);
    for (auto& v : img.data()) v = u(rng);
    return img;
}

}  // namespace

TEST_CASE("pattern token counts and geometry") {
    const auto fov = build_pattern(PatternKind::Foveated);
    const auto fine = build_pattern(PatternKind::Fine);
    const auto coarse = build_pattern(PatternKind::Coarse);
    CHECK(fov.token_count() == 20);
    CHECK(fine.token_count() == 324);
    CHECK(coarse.token_count() == 20);
    CHECK(static_cast<double>(fine.token_count()) / fov.token_count() == 16.2);
    CHECK(coarse.canvas_width == 320);
    CHECK(coarse.canvas_height == 256);

    long area = 0;
    for (const auto& p : fov.patches) area += static_cast<long>(p.size) * p.size;
    CHECK(area == 4 * 16 * 16 + 8 * 32 * 32 + 8 * 96 * 96);
    CHECK(area == 288 * 288);
    for (const auto& p : fine.patches) CHECK(p.size == 16);

    // Level 0 is the centred 2x2 block.
    CHECK(fov.patches[0] == PatchSpec{128, 128, 16, 0});
    CHECK(fov.patches[3] == PatchSpec{144, 144, 16, 0});
    int per_level[3] = {0, 0, 0};
    for (const auto& p : fov.patches) {
        ++per_level[p.level];
        CHECK(p.size == 16 * (p.level == 0 ? 1 : (p.level == 1 ? 2 : 6)));
    }
    CHECK(per_level[0] == 4);
    CHECK(per_level[1] == 8);
    CHECK(per_level[2] == 8);
    // Level-major then row-major.
    for (std::size_t i = 1; i < fov.patches.size(); ++i) {
        const auto& a = fov.patches[i - 1];
        const auto& b = fov.patches[i];
        CHECK((a.level < b.level || (a.level == b.level && (a.origin_y < b.origin_y ||
                                                            (a.origin_y == b.origin_y && a.origin_x < b.origin_x)))));
    }
}

TEST_CASE("every pattern partitions its canvas") {
    for (auto kind : {PatternKind::Foveated, PatternKind::Fine, PatternKind::Coarse}) {
        const auto counts = coverage_counts(build_pattern(kind));
        CHECK(std::all_of(counts.begin(), counts.end(), [](int c) { return c == 1; }));
    }
}

TEST_CASE("pattern text round trip") {
    for (auto kind : {PatternKind::Foveated, PatternKind::Fine, PatternKind::Coarse}) {
        const auto p = build_pattern(kind);
        CHECK(parse_pattern(serialize_pattern(p)) == p);
    }
    CHECK_THROWS_AS(parse_pattern("kind foveated\ncanvas 288 288\n"), InvalidInput);
    CHECK(parse_kind("coarse") == PatternKind::Coarse);
    CHECK_THROWS_AS(parse_kind("medium"), InvalidInput);
}

TEST_CASE("gaze pixel conversion") {
    CHECK(gaze_to_pixel(GazePoint(0.5, 0.5), 288, 288) == PixelCoord{144, 144});
    CHECK(gaze_to_pixel(GazePoint(0, 0), 288, 288) == PixelCoord{0, 0});
    CHECK(gaze_to_pixel(GazePoint(1, 1), 288, 288) == PixelCoord{287, 287});
    for (int x = 0; x < 288; x += 7) {
        const PixelCoord p{x, 287 - x};
        const GazePoint g = pixel_to_gaze(p, 288, 288);
        CHECK(gaze_to_pixel(g, 288, 288) == p);
        CHECK(std::abs(g.x() * 288 - x) <= 0.5);
    }
    CHECK(GazePoint(-0.2, 1.7) == GazePoint(0.0, 1.0));
    CHECK_THROWS_AS(GazePoint(std::nan(""), 0.5), InvalidInput);
}

TEST_CASE("image buffer validation") {
    CHECK_THROWS_AS(ImageBuffer(2, 2, 3, std::vector<double>(11, 0.5)), InvalidInput);
    CHECK_THROWS_AS(ImageBuffer(1, 1, 3, std::vector<double>{0.1, 1.2, 0.3}), InvalidInput);
    CHECK_THROWS_AS(ImageBuffer(1, 1, 3, std::vector<double>{0.1, std::nan(""), 0.3}), InvalidInput);
    CHECK_NOTHROW(ImageBuffer(1, 1, 3, std::vector<double>{0.0, 1.0, 0.5}));
}

TEST_CASE("shift for gaze") {
    const auto p = build_pattern(PatternKind::Foveated);
    const auto img = random_image(288, 288, 1);
    CHECK(shift_for_gaze(img, GazePoint(0.5, 0.5), p) == img);

    const ImageBuffer ones(288, 288, 3, 1.0);
    const auto shifted = shift_for_gaze(ones, GazePoint(0, 0), p);
    long zeros = 0;
    for (double v : shifted.data()) zeros += v == 0.0;
    CHECK(static_cast<double>(zeros) / shifted.size() == doctest::Approx(0.75).epsilon(1e-12));
    // Gaze pixel lands on the canvas centre.
    const GazePoint g(0.3, 0.8);
    const auto moved = shift_for_gaze(img, g, p);
    const PixelCoord src = gaze_to_pixel(g, 288, 288);
    for (int c = 0; c < 3; ++c) CHECK(moved.at(144, 144, c) == img.at(src.x, src.y, c));

    CHECK_THROWS_AS(shift_for_gaze(random_image(100, 100, 2), g, p), InvalidInput);
}

TEST_CASE("shift composition recovers the overlap") {
    const auto img = random_image(40, 30, 3);
    const int dx = 7, dy = -5;
    const auto back = shift_image(shift_image(img, dx, dy), -dx, -dy);
    for (int y = 0; y < 30; ++y)
        for (int x = 0; x < 40; ++x) {
            const bool overlap = x - dx >= 0 && x - dx < 40 && y - dy >= 0 && y - dy < 30;
            for (int c = 0; c < 3; ++c) CHECK(back.at(x, y, c) == (overlap ? img.at(x, y, c) : 0.0));
        }
}

TEST_CASE("tokenize constants and contraction") {
    const auto p = build_pattern(PatternKind::Foveated);
    const ImageBuffer constant(288, 288, 3, 0.375);
    const auto t = tokenize(constant, p, GazePoint(0.5, 0.5));
    CHECK(t.tokens.rows() == 20);
    CHECK(t.tokens.cols() == 768);
    CHECK((t.tokens.array() == 0.375).all());

    const auto img = random_image(288, 288, 4);
    const GazePoint g(0.41, 0.62);
    const auto tok = tokenize(img, p, g);
    const auto shifted = shift_for_gaze(img, g, p);
    for (std::size_t i = 0; i < p.patches.size(); ++i) {
        const auto& s = p.patches[i];
        double lo = 1, hi = 0;
        for (int y = s.origin_y; y < s.origin_y + s.size; ++y)
            for (int x = s.origin_x; x < s.origin_x + s.size; ++x)
                for (int c = 0; c < 3; ++c) {
                    lo = std::min(lo, shifted.at(x, y, c));
                    hi = std::max(hi, shifted.at(x, y, c));
                }
        CHECK(tok.tokens.row(static_cast<Eigen::Index>(i)).minCoeff() >= lo);
        CHECK(tok.tokens.row(static_cast<Eigen::Index>(i)).maxCoeff() <= hi);
    }
}

TEST_CASE("area averaging oracle on one level-1 patch") {
    const auto p = build_pattern(PatternKind::Foveated);
    const auto img = random_image(288, 288, 5);
    const auto tok = tokenize(img, p, GazePoint(0.5, 0.5));
    const auto& s = p.patches[4];  // first level-1 patch
    REQUIRE(s.level == 1);
    for (int oy = 0; oy < 16; oy += 5)
        for (int ox = 0; ox < 16; ox += 3)
            for (int c = 0; c < 3; ++c) {
                double sum = 0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) sum += img.at(s.origin_x + 2 * ox + dx, s.origin_y + 2 * oy + dy, c);
                CHECK(tok.tokens(4, (oy * 16 + ox) * 3 + c) == doctest::Approx(sum / 4).epsilon(1e-14));
            }
}

TEST_CASE("round trips") {
    const auto fine = build_pattern(PatternKind::Fine);
    const auto fov = build_pattern(PatternKind::Foveated);
    for (unsigned seed = 0; seed < 5; ++seed) {
        const auto img = random_image(288, 288, 10 + seed);
        CHECK(assemble(tokenize(img, fine)) == img);
        const GazePoint g(0.1 + 0.2 * seed, 0.9 - 0.2 * seed);
        const auto back = assemble(tokenize(img, fov, g));
        const PixelCoord off = gaze_offset(g, fov);
        for (int y = 128; y < 160; ++y)
            for (int x = 128; x < 160; ++x) {
                const int sx = x + off.x, sy = y + off.y;
                if (sx < 0 || sy < 0 || sx >= 288 || sy >= 288) continue;
                for (int c = 0; c < 3; ++c) REQUIRE(back.at(sx, sy, c) == img.at(sx, sy, c));
            }
    }
    // Fine tokens concatenated in row-major order rebuild the image.
    const auto img = random_image(288, 288, 20);
    const auto tok = tokenize(img, fine);
    CHECK(tok.tokens(19, 0) == img.at(16, 16, 0));
    CHECK(tok.tokens(0, (3 * 16 + 5) * 3 + 2) == img.at(5, 3, 2));

    TokenizedImage zeros{fov, Mat::Zero(20, 768), GazePoint(0.2, 0.7)};
    const auto z = assemble(zeros);
    CHECK(std::all_of(z.data().begin(), z.data().end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("tokenize preconditions") {
    const auto fov = build_pattern(PatternKind::Foveated);
    const auto coarse = build_pattern(PatternKind::Coarse);
    const auto img = random_image(288, 288, 6);
    CHECK_THROWS_AS(tokenize(img, fov), InvalidInput);
    CHECK_THROWS_AS(tokenize(img, coarse), InvalidInput);
    const auto fitted = fit_to_canvas(img, coarse);
    CHECK(fitted.width() == 320);
    CHECK(fitted.height() == 256);
    const auto t = tokenize(fitted, coarse);
    CHECK(t.tokens.rows() == 20);
    CHECK(t.tokens.cols() == 64 * 64 * 3);
    TokenizedImage bad{fov, Mat::Zero(19, 768), GazePoint()};
    CHECK_THROWS_AS(assemble(bad), InvalidInput);
}

TEST_CASE("tokenization is deterministic") {
    const auto fov = build_pattern(PatternKind::Foveated);
    const auto img = random_image(288, 288, 7);
    const auto a = tokenize(img, fov, GazePoint(0.33, 0.44));
    const auto b = tokenize(img, fov, GazePoint(0.33, 0.44));
    CHECK(a.tokens == b.tokens);
}

TEST_CASE("resampling helpers") {
    const ImageBuffer c(30, 20, 3, 0.25);
    const auto r = resize_bilinear(c, 17, 11);
    CHECK(std::all_of(r.data().begin(), r.data().end(), [](double v) { return std::abs(v - 0.25) < 1e-15; }));
    const auto img = random_image(8, 8, 8);
    const auto d = downscale_area(img, 4);
    CHECK(d.width() == 2);
    double sum = 0;
    for (int y = 4; y < 8; ++y)
        for (int x = 0; x < 4; ++x) sum += img.at(x, y, 1);
    CHECK(d.at(0, 1, 1) == doctest::Approx(sum / 16));
    CHECK_THROWS_AS(downscale_area(img, 3), InvalidInput);
}
