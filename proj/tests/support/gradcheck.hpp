#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "gazevit/nn.hpp"

namespace gazevit::testing {

struct GradReport {
    double max_rel = 0.0;
    std::string worst;
    int checked = 0;
};

// Sum of out * weights with fixed pseudo-random weights; turns any output into a scalar loss.
inline ad::Var weighted_sum(ad::Var out, std::uint64_t seed = 7) {
    nn::Rng rng(seed);
    return ad::sum(ad::mul(out, out.tape()->constant(nn::standard_normal(out.rows(), out.cols(), rng))));
}

// Central differences on up to `per_param` entries of every parameter,
// compared with the tape gradient as ||analytic - numeric|| / max(||analytic||, ||numeric||, floor).
// The floor keeps parameters whose exact gradient is zero (softmax shift invariance)
// from turning rounding noise into a relative error of one.
inline GradReport check_gradients(nn::ParamStore& store, const std::function<double(bool accumulate)>& loss,
                                  double h = 1e-6, int per_param = 24, double floor = 1e-4) {
    store.zero_grad();
    loss(true);
    GradReport report;
    for (std::size_t p = 0; p < store.size(); ++p) {
        ad::Param& param = store[p];
        const Eigen::Index n = param.value.size();
        if (param.grad.size() != n) param.grad = Mat::Zero(param.value.rows(), param.value.cols());
        const Eigen::Index stride = std::max<Eigen::Index>(1, n / per_param);
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (Eigen::Index i = 0; i < n; i += stride) {
            double& v = param.value.data()[i];
            const double saved = v;
            v = saved + h;
            const double up = loss(false);
            v = saved - h;
            const double down = loss(false);
            v = saved;
            const double numeric = (up - down) / (2 * h);
            const double analytic = param.grad.data()[i];
            diff2 += (analytic - numeric) * (analytic - numeric);
            a2 += analytic * analytic;
            n2 += numeric * numeric;
            ++report.checked;
        }
        const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), floor});
        if (rel > report.max_rel) {
            report.max_rel = rel;
            report.worst = param.name;
        }
    }
    return report;
}

// Convenience for tape-built losses.
inline GradReport check_tape_gradients(nn::ParamStore& store, const std::function<ad::Var(ad::Tape&)>& build,
                                       double h = 1e-6, int per_param = 24) {
    return check_gradients(
        store,
        [&](bool accumulate) {
            ad::Tape tape(accumulate);
            ad::Var l = build(tape);
            if (accumulate) tape.backward(l);
            return l.value()(0, 0);
        },
        h, per_param);
}

}  // namespace gazevit::testing
