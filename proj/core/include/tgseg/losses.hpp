#pragma once

#include "tgseg/autodiff.hpp"

namespace tgseg {

struct LossWeights {
    double gamma = 1.0;   // Dice weight inside the segmentation loss
    double lambda = 1.0;  // denoiser loss weight in the total
};

struct LossReport {
    double l_ce = 0.0;
    double l_dsc = 0.0;
    double l1 = 0.0;
    double l2 = 0.0;
    double total = 0.0;
    std::vector<double> per_class_dice;  // soft dice, all N classes
};

struct SegLossTerms {
    ad::Var l_ce;
    ad::Var l_dsc;
    ad::Var l1;
    std::vector<double> per_class_dice;
};

// probs: [N,D,H,W] or [B,N,D,H,W] on the per-voxel simplex (validated to
// 1e-4); target: flat class ids, z-major (batch-major when batched).
// l_ce = mean -log p(target); l_dsc = 1 - mean soft dice over foreground
// classes with smoothing eps_s; l1 = l_ce + gamma * l_dsc.
SegLossTerms segmentation_loss(const ad::Var& probs, const std::vector<int>& target, double gamma,
                               double eps_s = 1e-5);

// Mean squared error normalized by element count.
ad::Var denoiser_loss(const ad::Var& predicted, const ad::Var& true_noise);
ad::Var denoiser_loss(const ad::Var& predicted, const Tensor& true_noise);

ad::Var total_loss(const ad::Var& l1, const ad::Var& l2, const LossWeights& w);
double total_loss(double l1, double l2, const LossWeights& w);

// Plain-value convenience for evaluation paths.
LossReport compute_losses(const Tensor& probs, const std::vector<int>& target,
                          const Tensor& predicted_noise, const Tensor& true_noise,
                          const LossWeights& w);

}  // namespace tgseg
