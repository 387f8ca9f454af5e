#include <doctest.h>

#include <filesystem>
#include <numeric>

#include "gazevit/encoder.hpp"
#include "gazevit/errors.hpp"

using namespace gazevit;
using namespace gazevit::encoder;
using fovea::PatternKind;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, unsigned seed) {
    Rng rng(seed);
    return nn::standard_normal(r, c, rng);
}

fovea::TokenizedImage random_tokens(PatternKind kind, unsigned seed) {
    const auto p = fovea::build_pattern(kind);
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    Mat t(static_cast<Eigen::Index>(p.token_count()), p.token_values());
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
    return {p, t, kind == PatternKind::Foveated ? std::optional<GazePoint>(GazePoint(0.5, 0.5)) : std::nullopt};
}

}  // namespace

TEST_CASE("patch embedding shapes") {
    ParamStore store;
    Rng rng(1);
    VisionTransformer vit(store, "vit", EncoderConfig::desk(PatternKind::Foveated), rng);
    const auto seq = patch_embed(vit, random_tokens(PatternKind::Foveated, 2));
    CHECK(seq.tokens.rows() == 20);
    CHECK(seq.tokens.cols() == 64);
    CHECK(seq.provenance == PatternKind::Foveated);

    for (std::size_t i = 0; i < store.size(); ++i) store[i].value.setZero();
    fovea::TokenizedImage zeros{fovea::build_pattern(PatternKind::Foveated), Mat::Zero(20, 768), GazePoint()};
    CHECK(patch_embed(vit, zeros).tokens.isZero(0.0));

    fovea::TokenizedImage bad{zeros.pattern, Mat::Zero(20, 700), GazePoint()};
    CHECK_THROWS_AS(patch_embed(vit, bad), InvalidInput);
}

TEST_CASE("vit_forward preserves shape for 20 and 324 tokens") {
    for (auto kind : {PatternKind::Foveated, PatternKind::Fine}) {
        ParamStore store;
        Rng rng(3);
        const auto cfg = EncoderConfig::for_pattern(kind, 1, 16, 2);
        VisionTransformer vit(store, "vit", cfg, rng);
        const auto n = static_cast<Eigen::Index>(fovea::build_pattern(kind).token_count());
        const TokenSequence seq{random_mat(n, 16, 4), kind};
        const auto out = vit_forward(vit, seq);
        CHECK(out.tokens.rows() == n);
        CHECK(out.tokens.cols() == 16);
    }
}

TEST_CASE("vit_forward rejects non-finite input") {
    ParamStore store;
    Rng rng(3);
    VisionTransformer vit(store, "vit", EncoderConfig::for_pattern(PatternKind::Foveated, 1, 16, 2), rng);
    Mat x = random_mat(5, 16, 1);
    x(2, 3) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(vit_forward(vit, {x, PatternKind::Foveated}), InvalidInput);
}

TEST_CASE("permutation equivariance") {
    ParamStore store;
    Rng rng(5);
    auto cfg = EncoderConfig::for_pattern(PatternKind::Foveated, 2, 16, 4);
    cfg.embed_input = 12;
    VisionTransformer vit(store, "vit", cfg, rng);
    const Mat pixels = random_mat(6, 12, 6);
    const std::vector<int> slots{0, 1, 2, 3, 4, 5};
    const std::vector<int> perm{3, 0, 5, 1, 4, 2};
    Mat permuted(6, 12);
    std::vector<int> permuted_slots(6);
    for (int i = 0; i < 6; ++i) {
        permuted.row(i) = pixels.row(perm[i]);
        permuted_slots[i] = slots[perm[i]];
    }
    const auto a = vit_forward(vit, patch_embed_rows(vit, pixels, slots, PatternKind::Foveated));
    const auto b = vit_forward(vit, patch_embed_rows(vit, permuted, permuted_slots, PatternKind::Foveated));
    for (int i = 0; i < 6; ++i) CHECK((b.tokens.row(i) - a.tokens.row(perm[i])).norm() < 1e-12);
}

TEST_CASE("zeroed residual projections make vit_forward the identity") {
    ParamStore store;
    Rng rng(7);
    VisionTransformer vit(store, "vit", EncoderConfig::for_pattern(PatternKind::Foveated, 3, 16, 2), rng);
    for (int b = 0; b < 3; ++b) {
        const std::string p = "vit.block" + std::to_string(b);
        for (const char* leaf : {".attn.o.weight", ".attn.o.bias", ".mlp.fc2.weight", ".mlp.fc2.bias"})
            store.get(p + leaf).value.setZero();
    }
    const Mat x = random_mat(9, 16, 8);
    CHECK(vit_forward(vit, {x, PatternKind::Foveated}).tokens == x);
}

TEST_CASE("Q-Former output count is fixed by the queries") {
    for (Eigen::Index n : {324, 20}) {
        ParamStore store;
        Rng rng(9);
        QFormer q(store, "qf", 16, 4, rng);
        const Mat out = qformer(q, {random_mat(n, 16, 10), PatternKind::Fine});
        CHECK(out.rows() == 16);
        CHECK(out.cols() == 16);
    }
    ParamStore store;
    Rng rng(9);
    QFormer q(store, "qf", 16, 4, rng);
    CHECK_THROWS_AS(qformer(q, {Mat(0, 16), PatternKind::Fine}), InvalidInput);
}

TEST_CASE("cross-attention over identical tokens returns the projected value") {
    ParamStore store;
    Rng rng(11);
    QFormer q(store, "qf", 16, 4, rng);
    const auto& cross = q.cross_attention(0);
    const RowVec token = random_mat(1, 16, 12);
    const Mat keys = token.replicate(7, 1);
    const RowVec expected =
        ((token * cross.v.weight->value + cross.v.bias->value) * cross.o.weight->value) + cross.o.bias->value;
    for (unsigned seed : {13u, 14u, 15u}) {
        Tape tape(false);
        const Mat queries = random_mat(5, 16, seed) * 3.0;
        const Mat out = cross(tape, tape.constant(queries), tape.constant(keys), Segments::uniform(1, 5),
                              Segments::uniform(1, 7))
                            .value();
        for (int i = 0; i < 5; ++i) CHECK((out.row(i) - expected).norm() < 1e-12);
    }
}

TEST_CASE("mae_mask") {
    const auto plan = mae_mask(20, 0.75, 3);
    CHECK(plan.masked.size() == 15);
    CHECK(plan.visible.size() == 5);
    CHECK(std::is_sorted(plan.masked.begin(), plan.masked.end()));
    std::vector<int> all(plan.visible);
    all.insert(all.end(), plan.masked.begin(), plan.masked.end());
    std::sort(all.begin(), all.end());
    std::vector<int> expected(20);
    std::iota(expected.begin(), expected.end(), 0);
    CHECK(all == expected);

    CHECK(mae_mask(20, 0.0, 3).masked.empty());
    const auto again = mae_mask(20, 0.75, 3);
    CHECK(again.masked == plan.masked);
    CHECK(mae_mask(20, 0.75, 4).masked != plan.masked);
    CHECK(mae_mask(324, 0.75, 0).masked.size() == 243);
}

TEST_CASE("MAE reconstruction") {
    const auto pattern = fovea::build_pattern(PatternKind::Foveated);
    const MaeModel model(pattern, EncoderConfig::for_pattern(PatternKind::Foveated, 1, 16, 2),
                         EncoderConfig::for_pattern(PatternKind::Foveated, 1, 16, 2), 1);
    const auto tokens = random_tokens(PatternKind::Foveated, 20);

    const auto none = mae_reconstruct(model, tokens, mae_mask(20, 0.0, 1));
    CHECK(none.loss == 0.0);
    CHECK(none.reconstruction.rows() == 20);
    CHECK(none.reconstruction.cols() == 768);

    const auto plan = mae_mask(20, 0.75, 2);
    const auto a = mae_reconstruct(model, tokens, plan);
    CHECK(a.encoded.rows() == 5);
    CHECK(a.loss > 0.0);
    auto altered = tokens;
    for (int m : plan.masked) altered.tokens.row(m).setConstant(0.9);
    const auto b = mae_reconstruct(model, altered, plan);
    CHECK(a.encoded == b.encoded);
    CHECK(a.reconstruction == b.reconstruction);

    MaskPlan broken = plan;
    broken.masked.pop_back();
    CHECK_THROWS_AS(mae_reconstruct(model, tokens, broken), InvalidInput);
}

TEST_CASE("FLOP accounting") {
    const auto fine = EncoderConfig::vit_b(PatternKind::Fine);
    const auto fov = EncoderConfig::vit_b(PatternKind::Foveated);
    const auto coarse = EncoderConfig::vit_b(PatternKind::Coarse);

    const auto f64 = count_flops(fine, 324, 768, 64);
    const auto f1 = count_flops(fine, 324, 768, 1);
    CHECK(f64.gflops == doctest::Approx(64 * f1.gflops).epsilon(1e-15));
    CHECK(f64.total_macs == f1.total_macs);
    CHECK(f64.total_macs ==
          doctest::Approx(f64.patch_embed_macs + f64.attention_macs + f64.mlp_macs).epsilon(1e-15));

    const auto n = count_flops(fov, 40, 768, 1);
    const auto n2 = count_flops(fov, 80, 768, 1);
    CHECK(n2.attention_score_macs == doctest::Approx(4 * n.attention_score_macs).epsilon(1e-15));
    CHECK(n2.attention_macs - n2.attention_score_macs ==
          doctest::Approx(2 * (n.attention_macs - n.attention_score_macs)).epsilon(1e-15));
    CHECK(n2.mlp_macs == doctest::Approx(2 * n.mlp_macs).epsilon(1e-15));
    CHECK(n2.patch_embed_macs == doctest::Approx(2 * n.patch_embed_macs).epsilon(1e-15));

    const double g_fov = count_flops(fov, 20, 768, 64).gflops;
    const double g_coarse = count_flops(coarse, 20, 64 * 64 * 3, 64).gflops;
    const double g_fine = f64.gflops;
    CHECK(g_fov < g_coarse);
    CHECK(g_coarse < g_fine);
    CHECK(g_fine == doctest::Approx(1905.4).epsilon(0.10));
    CHECK(g_fov == doctest::Approx(115.6).epsilon(0.10));
    CHECK(g_coarse - g_fov == doctest::Approx(20.0 * (12288 - 768) * 768 * 64 / 1e9).epsilon(1e-12));
}

TEST_CASE("checkpoint round trip") {
    const auto path = std::filesystem::temp_directory_path() / "gazevit_test_ckpt.bin";
    ParamStore a;
    Rng rng(21);
    VisionTransformer vit_a(a, "vit", EncoderConfig::for_pattern(PatternKind::Foveated, 1, 16, 2), rng);
    nn::save_checkpoint(a, path);

    ParamStore b;
    Rng rng2(22);
    VisionTransformer vit_b(b, "vit", EncoderConfig::for_pattern(PatternKind::Foveated, 1, 16, 2), rng2);
    CHECK(a[0].value != b[0].value);
    nn::load_checkpoint(b, path);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].value == b[i].value);

    ParamStore c;
    Rng rng3(23);
    VisionTransformer vit_c(c, "vit", EncoderConfig::for_pattern(PatternKind::Foveated, 1, 32, 2), rng3);
    CHECK_THROWS_AS(nn::load_checkpoint(c, path), IoError);
    CHECK_THROWS_AS(nn::load_checkpoint(c, path.string() + ".missing"), IoError);
    std::filesystem::remove(path);
}
