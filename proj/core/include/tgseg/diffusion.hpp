#pragma once

#include <functional>

#include "tgseg/nn.hpp"

namespace tgseg {

// Linear beta schedule with cumulative products. t is 1-based; index 0 is
// the t=0 convention point with alpha_bar = 1.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;       // beta[t], t in [1,T]; beta[0] unused
    std::vector<double> alpha;      // 1 - beta[t]
    std::vector<double> alpha_bar;  // prod_{i<=t} alpha[i]; alpha_bar[0] = 1

    double a_bar(int t) const {
        if (t < 0 || t > T) throw ValidationError("timestep out of range: " + std::to_string(t));
        return alpha_bar[static_cast<size_t>(t)];
    }
};

NoiseSchedule build_schedule(int T, double beta_start, double beta_end);

// z(t) = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps, exactly.
Tensor forward_diffuse(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s);
ad::Var forward_diffuse(const ad::Var& z0, int t, const Tensor& eps, const NoiseSchedule& s);

// zhat0 = (z_t - sqrt(1-abar_t) eps_hat) / sqrt(abar_t); inverts
// forward_diffuse exactly when given the true noise.
Tensor z0_estimate(const Tensor& z_t, int t, const Tensor& eps_hat, const NoiseSchedule& s);
ad::Var z0_estimate(const ad::Var& z_t, int t, const ad::Var& eps_hat, const NoiseSchedule& s);

struct DenoiserConfig {
    int k = 4;        // latent channels
    int cond = 32;    // conditioning channels
    int base = 24;    // first level width
    int mid = 32;     // bottleneck width
    int time_dim = 128;
    int heads = 4;    // bottleneck attention heads
};

// Conditional noise predictor: ResUNet over the latent grid with the
// conditioning field concatenated channel-wise, sinusoidal time embedding
// injected in every residual block, self-attention at the bottleneck.
class Denoiser {
public:
    Denoiser() = default;
    Denoiser(nn::ParamStore& ps, const std::string& prefix, DenoiserConfig cfg, Rng& rng);

    // noisy: [B,k,d,h,w], cond: [B,c,d,h,w], t: one timestep per sample.
    // Returns predicted noise [B,k,d,h,w].
    ad::Var forward(const ad::Var& noisy, const ad::Var& cond, const std::vector<int>& t) const;

    // Evaluation-mode, single sample.
    Tensor predict_noise(const Tensor& noisy, const Tensor& cond, int t) const;

    const DenoiserConfig& config() const { return cfg_; }

private:
    DenoiserConfig cfg_;
    nn::Conv3dLayer in_;
    nn::ResBlock3d enc1_, down_, bottleneck_, dec1_;
    nn::SpatialSelfAttention attn_;
    nn::ConvTranspose3dLayer up_;
    nn::GroupNormLayer out_norm_;
    nn::Conv3dLayer out_;
    bool initialized_ = false;
};

// Denoiser hook for the sampler: (z_t [k,d,h,w], t) -> predicted noise.
using DenoiseFn = std::function<Tensor(const Tensor&, int)>;

// Deterministic DDIM (eta = 0) over an evenly spaced descending timestep
// subsequence {T, T-floor(T/steps), ...} of length `steps`, with a final
// jump to the t=0 state. Starts from seeded standard normal noise.
Tensor ddim_sample(const Shape& latent_shape, int steps, const NoiseSchedule& s,
                   const DenoiseFn& denoise, std::uint64_t seed);

// The exact timestep subsequence the sampler visits (ends with 0).
std::vector<int> ddim_timesteps(int T, int steps);

}  // namespace tgseg
