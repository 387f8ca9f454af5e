#include <doctest.h>

#include <cmath>
#include <numeric>

#include "../support/gradcheck.hpp"
#include "gazevit/errors.hpp"
#include "gazevit/policy.hpp"
#include "gazevit/tasks.hpp"

using namespace gazevit;
using namespace gazevit::policy;

namespace {

PolicyConfig tiny(int K = 3, int D = 2) {
    PolicyConfig c;
    c.chunk_size = K;
    c.action_dim = D;
    c.proprio_dim = 2;
    c.dim = 16;
    c.heads = 2;
    c.depth = 1;
    c.time_features = 8;
    c.seed = 5;
    return c;
}

Mat randn(Eigen::Index r, Eigen::Index c, unsigned seed) {
    Rng rng(seed);
    return nn::standard_normal(r, c, rng);
}

void perturb(FlowPolicy& p, unsigned seed, double s = 0.1) {
    Rng rng(seed);
    for (std::size_t i = 0; i < p.params().size(); ++i) {
        auto& v = p.params()[i].value;
        v += s * nn::standard_normal(v.rows(), v.cols(), rng);
    }
}

}  // namespace

TEST_CASE("probability path") {
    const Mat z0 = randn(4, 3, 1), A = randn(4, 3, 2);
    CHECK(flow_interpolate(z0, A, 0.0) == z0);
    CHECK(flow_interpolate(z0, A, 1.0) == A);
    CHECK(flow_interpolate(Mat::Zero(4, 3), A, 1.0) == A);
    const Mat mid = flow_interpolate(z0, A, 0.25);
    CHECK((mid - (0.75 * z0 + 0.25 * A)).norm() < 1e-15);
    // Affine in t.
    const Mat a = flow_interpolate(z0, A, 0.2), b = flow_interpolate(z0, A, 0.6);
    CHECK(((a + b) / 2 - flow_interpolate(z0, A, 0.4)).norm() < 1e-14);
}

TEST_CASE("adaln modulation") {
    const Mat x = randn(5, 8, 3);
    Mat ln = x;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().mean();
        ln.row(r) = (x.row(r).array() - mu) / std::sqrt(var + 1e-6);
    }
    const RowVec zero = RowVec::Zero(8);
    CHECK((adaln_modulate(x, zero, zero) - ln).norm() < 1e-12);

    const RowVec gamma = randn(1, 8, 4);
    const RowVec beta = randn(1, 8, 5);
    const Mat expected = (ln.array().rowwise() * (gamma.array() + 1)).rowwise() + beta.array();
    CHECK((adaln_modulate(x, gamma, beta) - expected).norm() < 1e-12);

    // beta = -(gamma + 1) * LN(x) on a single row zeroes it.
    const Mat row = x.topRows(1);
    const RowVec cancel = -((gamma.array() + 1) * ln.row(0).array()).matrix();
    CHECK(adaln_modulate(row, gamma, cancel).norm() < 1e-12);
}

TEST_CASE("zero-initialized modulation and output") {
    for (int K : {1, 16}) {
        FlowPolicy p(tiny(K));
        for (double t : {0.0, 0.3, 1.0})
            for (int b = 0; b < p.net().depth(); ++b) CHECK(p.net().block_modulation(b, t).isZero(0.0));
        const Observation obs = p.encode(nullptr, randn(1, 2, 6));
        const Mat v = dit_forward(p, {randn(K, 2, 7) * 5.0, 0.42, Mat()}, obs);
        CHECK(v.rows() == K);
        CHECK(v.isZero(0.0));
        const Mat z0 = randn(K, 2, 8);
        CHECK(euler_integrate(p, obs, 8, z0).actions == z0);
    }
}

TEST_CASE("fresh network loss is the noise energy") {
    FlowPolicy p(tiny(4));
    const Observation obs = p.encode(nullptr, RowVec::Zero(2));
    const Mat A = Mat::Zero(4, 2);
    Rng rng(9);
    const int n = 400;
    std::vector<double> losses;
    for (int i = 0; i < n; ++i) {
        const Mat z0 = nn::standard_normal(4, 2, rng);
        const double t = std::uniform_real_distribution<double>(0, 1)(rng);
        const double l = cfm_loss(p, A, obs, t, z0).loss;
        CHECK(l == doctest::Approx(z0.squaredNorm() / 8).epsilon(1e-14));
        losses.push_back(l);
    }
    const double mean = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
    double var = 0;
    for (double l : losses) var += (l - mean) * (l - mean);
    const double se = std::sqrt(var / (n - 1) / n);
    CHECK(std::abs(mean - 1.0) < 3 * se);
}

TEST_CASE("cfm_loss preconditions") {
    FlowPolicy p(tiny());
    const Observation obs = p.encode(nullptr, RowVec::Zero(2));
    CHECK_THROWS_AS(cfm_loss(p, Mat::Zero(3, 2), obs, 1.5, Mat::Zero(3, 2)), InvalidInput);
    CHECK_THROWS_AS(cfm_loss(p, Mat::Zero(3, 2), obs, -0.1, Mat::Zero(3, 2)), InvalidInput);
    CHECK_THROWS_AS(cfm_loss(p, Mat::Zero(2, 2), obs, 0.5, Mat::Zero(2, 2)), InvalidInput);
    CHECK_THROWS_AS(p.encode(nullptr, RowVec::Zero(3)), InvalidInput);
    const auto r = cfm_loss(p, Mat::Ones(3, 2), obs, 1.0, Mat::Zero(3, 2));
    CHECK(r.z_t == Mat::Ones(3, 2));
    CHECK(r.target == Mat::Ones(3, 2));
}

TEST_CASE("cfm_loss gradients match finite differences") {
    for (bool image : {false, true}) {
        auto cfg = tiny(3);
        cfg.use_image = image;
        cfg.encoder = encoder::EncoderConfig::for_pattern(fovea::PatternKind::Foveated, 1, 16, 2);
        cfg.encoder.embed_input = 12;
        cfg.encoder.n_tokens = 4;
        cfg.n_queries = 2;
        FlowPolicy p(cfg);
        perturb(p, 10);
        const Mat A = randn(3, 2, 11), z0 = randn(3, 2, 12);
        const RowVec proprio = randn(1, 2, 13);
        fovea::TokenizedImage img;
        img.tokens = randn(4, 12, 14);
        auto loss = [&](bool acc) {
            if (!image) return cfm_loss(p, A, p.encode(nullptr, proprio), 0.37, z0, acc).loss;
            // Through the encoder: record c_img on the same tape.
            Tape tape(acc);
            Segments segs;
            const fovea::TokenizedImage* batch[] = {&img};
            Var c = p.encode_images(tape, batch, 1, segs);
            const double ts[] = {0.37};
            Var v = p.net()(tape, tape.constant(flow_interpolate(z0, A, 0.37)), ts, c, segs,
                            tape.constant(proprio));
            Var l = ad::mse(v, A - z0);
            if (acc) tape.backward(l);
            return l.value()(0, 0);
        };
        const auto report = testing::check_gradients(p.params(), loss);
        CAPTURE(report.worst);
        CHECK(report.max_rel < 1e-4);
    }
}

TEST_CASE("Euler integration") {
    const Mat z0 = randn(4, 2, 15), u = randn(4, 2, 16);
    for (int steps : {1, 3, 8, 50}) {
        CHECK((euler_integrate_field([&](const Mat&, double) { return u; }, z0, steps) - (z0 + u)).norm() < 1e-13);
        CHECK(euler_integrate_field([&](const Mat& z, double) { return Mat::Zero(z.rows(), z.cols()); }, z0, steps) ==
              z0);
    }
    CHECK_THROWS_AS(euler_integrate_field([&](const Mat&, double) { return u; }, z0, 0), InvalidInput);
    CHECK_THROWS_AS(euler_integrate_field(
                        [&](const Mat& z, double) { return Mat(z * 1e200); }, Mat::Constant(1, 1, 1e200), 2),
                    DivergenceError);
}

TEST_CASE("temporal ensemble") {
    SUBCASE("single chunk returned unchanged") {
        EnsembleBuffer buf(0.01);
        Mat chunk(4, 2);
        chunk << 1, 2, 3, 4, 5, 6, 7, 8;
        buf.add(10, chunk);
        CHECK(temporal_ensemble(buf, 12) == chunk.row(2));
    }
    SUBCASE("weighted by age") {
        EnsembleBuffer buf(0.01);
        Mat old = Mat::Zero(20, 1);
        old(16, 0) = 1.0;
        buf.add(0, old);
        buf.add(16, Mat::Zero(20, 1));
        const double expected = std::exp(-0.16) / (1 + std::exp(-0.16));
        CHECK(temporal_ensemble(buf, 16)(0) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(expected == doctest::Approx(0.4601).epsilon(1e-4));
    }
    SUBCASE("equal predictions") {
        EnsembleBuffer buf(0.3);
        buf.add(0, Mat::Constant(8, 2, 0.7));
        buf.add(3, Mat::Constant(8, 2, 0.7));
        buf.add(5, Mat::Constant(8, 2, 0.7));
        CHECK((temporal_ensemble(buf, 6).array() - 0.7).abs().maxCoeff() < 1e-15);
    }
    SUBCASE("no coverage stalls") {
        EnsembleBuffer buf(0.01);
        CHECK_THROWS_AS(temporal_ensemble(buf, 0), PolicyStall);
        buf.add(0, Mat::Zero(4, 2));
        CHECK_THROWS_AS(temporal_ensemble(buf, 4), PolicyStall);
    }
}

TEST_CASE("EMA and schedule definitions") {
    nn::ParamStore store;
    auto& p = store.add("w", randn(3, 2, 17));
    const Mat p0 = p.value;
    nn::Ema ema(store, 0.99);
    p.value = randn(3, 2, 18);
    ema.update(store);
    CHECK((ema.shadow(0) - (0.99 * p0 + 0.01 * p.value)).norm() < 1e-15);

    CHECK(nn::cosine_lr(1e-4, 0, 100) == 1e-4);
    CHECK(nn::cosine_lr(1e-4, 100, 100) == doctest::Approx(0.0));
    CHECK(nn::cosine_lr(1e-4, 50, 100) == doctest::Approx(5e-5));
}

TEST_CASE("training is deterministic and ends near zero learning rate") {
    const auto task = tasks::MixtureTask::standard();
    Rng rng(1);
    const auto data = task.dataset(64, rng);
    auto cfg = task.policy_config(3);
    cfg.steps = 40;
    cfg.batch = 16;
    FlowPolicy a(cfg), b(cfg);
    const auto ra = train_policy(a, data);
    const auto rb = train_policy(b, data);
    CHECK(ra.losses == rb.losses);
    CHECK(ra.losses.size() == 40);
    CHECK(ra.learning_rates.back() < 1e-2 * cfg.lr);
    for (std::size_t i = 0; i < a.params().size(); ++i) CHECK(a.params()[i].value == b.params()[i].value);
}

TEST_CASE("mixture loss drops by at least 80 percent") {
    const auto task = tasks::MixtureTask::standard();
    Rng rng(0);
    const auto data = task.dataset(2000, rng);
    FlowPolicy policy(task.policy_config(0));
    const auto r = train_policy(policy, data);
    REQUIRE(r.losses.size() == 2000);
    const double tail = std::accumulate(r.losses.end() - 100, r.losses.end(), 0.0) / 100;
    MESSAGE("step0=" << r.losses.front() << " tail=" << tail);
    CHECK(tail < 0.2 * r.losses.front());
}
