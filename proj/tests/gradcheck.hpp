#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "tgseg/autodiff.hpp"

namespace tgseg::testing {

// Central finite-difference check. `build_loss` must rebuild the graph from
// the current parameter values on every call. Returns the worst per-tensor
// relative error ||g_ad - g_fd|| / max(||g_ad||, ||g_fd||, eps).
inline double gradcheck(std::vector<ad::Var> params,
                        const std::function<ad::Var()>& build_loss, double h = 1e-5) {
    for (auto& p : params) {
        p.node()->ensure_grad();
        std::fill(p.node()->grad.data.begin(), p.node()->grad.data.end(), 0.0);
    }
    ad::Var loss = build_loss();
    ad::backward(loss);

    double worst = 0.0;
    for (auto& p : params) {
        Tensor& w = p.node()->value;
        const Tensor& ga = p.node()->grad;
        double na = 0.0, nf = 0.0, nd = 0.0;
        for (std::int64_t i = 0; i < w.numel(); ++i) {
            const double keep = w[i];
            w[i] = keep + h;
            const double fp = build_loss().val().data[0];
            w[i] = keep - h;
            const double fm = build_loss().val().data[0];
            w[i] = keep;
            const double gf = (fp - fm) / (2.0 * h);
            na += ga[i] * ga[i];
            nf += gf * gf;
            const double d = ga[i] - gf;
            nd += d * d;
        }
        const double rel = std::sqrt(nd) / std::max({std::sqrt(na), std::sqrt(nf), 1e-12});
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace tgseg::testing
