#include "tgseg/losses.hpp"

#include <cmath>

namespace tgseg {

namespace {

void check_simplex(const Tensor& p, int B, int N, std::int64_t S) {
    for (int b = 0; b < B; ++b)
        for (std::int64_t v = 0; v < S; ++v) {
            double sum = 0.0;
            for (int c = 0; c < N; ++c) {
                const double pv = p.data[(static_cast<std::int64_t>(b) * N + c) * S + v];
                if (pv < -1e-12) throw ValidationError("probabilities must be nonnegative");
                sum += pv;
            }
            if (std::abs(sum - 1.0) > 1e-4)
                throw ValidationError("per-voxel probabilities off the simplex by " +
                                      std::to_string(std::abs(sum - 1.0)));
        }
}

}  // namespace

SegLossTerms segmentation_loss(const ad::Var& probs, const std::vector<int>& target, double gamma,
                               double eps_s) {
    const Tensor& p = probs.val();
    if (p.ndim() != 4 && p.ndim() != 5) throw ShapeError("segmentation_loss: need 4/5-D probs");
    const bool batched = p.ndim() == 5;
    const int B = batched ? p.shape[0] : 1;
    const int N = batched ? p.shape[1] : p.shape[0];
    const std::int64_t S = p.numel() / (static_cast<std::int64_t>(B) * N);
    if (static_cast<std::int64_t>(target.size()) != B * S)
        throw ShapeError("segmentation_loss: target count mismatch");
    if (N < 2) throw ShapeError("segmentation_loss: need at least 2 classes");
    check_simplex(p, B, N, S);

    SegLossTerms out;
    out.l_ce = ad::cross_entropy_mean(probs, target);

    // soft dice per class from channel sums against the one-hot target
    ad::Var probs5 = batched ? probs : ad::reshape(probs, {1, N, p.shape[1], p.shape[2], p.shape[3]});
    std::vector<ad::Var> fg_dice;
    out.per_class_dice.resize(static_cast<size_t>(N));
    for (int c = 0; c < N; ++c) {
        Tensor mask(probs5.val().shape);
        double target_sum = 0.0;
        for (int b = 0; b < B; ++b)
            for (std::int64_t v = 0; v < S; ++v)
                if (target[static_cast<size_t>(b) * S + v] == c) {
                    mask.data[(static_cast<std::int64_t>(b) * N + c) * S + v] = 1.0;
                    target_sum += 1.0;
                }
        ad::Var pc = ad::slice_axis1(probs5, c, c + 1);
        ad::Var mc = ad::slice_axis1(ad::constant(std::move(mask)), c, c + 1);
        ad::Var inter = ad::sum_all(ad::mul(pc, mc));
        ad::Var psum = ad::sum_all(pc);
        ad::Var num = ad::add_scalar(ad::scale(inter, 2.0), eps_s);
        ad::Var den = ad::add_scalar(ad::add_scalar(psum, target_sum), eps_s);
        ad::Var dice_c = ad::div(num, den);
        out.per_class_dice[static_cast<size_t>(c)] = dice_c.val().data[0];
        if (c > 0) fg_dice.push_back(dice_c);
    }
    ad::Var mean_fg = fg_dice[0];
    for (size_t i = 1; i < fg_dice.size(); ++i) mean_fg = ad::add(mean_fg, fg_dice[i]);
    mean_fg = ad::scale(mean_fg, 1.0 / static_cast<double>(fg_dice.size()));
    out.l_dsc = ad::add_scalar(ad::scale(mean_fg, -1.0), 1.0);
    out.l1 = ad::add(out.l_ce, ad::scale(out.l_dsc, gamma));
    return out;
}

ad::Var denoiser_loss(const ad::Var& predicted, const ad::Var& true_noise) {
    require_same_shape(predicted.val(), true_noise.val(), "denoiser_loss");
    ad::Var d = ad::sub(predicted, true_noise);
    return ad::mean_all(ad::mul(d, d));
}

ad::Var denoiser_loss(const ad::Var& predicted, const Tensor& true_noise) {
    return denoiser_loss(predicted, ad::constant(true_noise));
}

ad::Var total_loss(const ad::Var& l1, const ad::Var& l2, const LossWeights& w) {
    if (!(std::isfinite(w.gamma) && std::isfinite(w.lambda)) || w.gamma < 0 || w.lambda < 0)
        throw ValidationError("loss weights must be finite and nonnegative");
    return ad::add(l1, ad::scale(l2, w.lambda));
}

double total_loss(double l1, double l2, const LossWeights& w) {
    if (!(std::isfinite(l1) && std::isfinite(l2)))
        throw ValidationError("total_loss: non-finite inputs");
    return l1 + w.lambda * l2;
}

LossReport compute_losses(const Tensor& probs, const std::vector<int>& target,
                          const Tensor& predicted_noise, const Tensor& true_noise,
                          const LossWeights& w) {
    ad::NoGradGuard ng;
    SegLossTerms seg = segmentation_loss(ad::constant(probs), target, w.gamma);
    ad::Var l2 = denoiser_loss(ad::constant(predicted_noise), true_noise);
    LossReport r;
    r.l_ce = seg.l_ce.val().data[0];
    r.l_dsc = seg.l_dsc.val().data[0];
    r.l1 = seg.l1.val().data[0];
    r.l2 = l2.val().data[0];
    r.total = total_loss(r.l1, r.l2, w);
    r.per_class_dice = seg.per_class_dice;
    return r;
}

}  // namespace tgseg
