#include "tgseg/diffusion.hpp"

#include <cmath>

namespace tgseg {

NoiseSchedule build_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ValidationError("schedule needs T >= 1");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw ValidationError("schedule needs 0 < beta_start <= beta_end < 1");
    if (T > 1 && beta_start == beta_end)
        throw ValidationError("schedule needs beta_start < beta_end for T > 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.assign(static_cast<size_t>(T) + 1, 0.0);
    s.alpha.assign(static_cast<size_t>(T) + 1, 1.0);
    s.alpha_bar.assign(static_cast<size_t>(T) + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        s.beta[static_cast<size_t>(t)] = beta_start + (beta_end - beta_start) * frac;
        s.alpha[static_cast<size_t>(t)] = 1.0 - s.beta[static_cast<size_t>(t)];
        s.alpha_bar[static_cast<size_t>(t)] =
            s.alpha_bar[static_cast<size_t>(t) - 1] * s.alpha[static_cast<size_t>(t)];
    }
    return s;
}

Tensor forward_diffuse(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s) {
    if (t < 1 || t > s.T) throw ValidationError("forward_diffuse: t out of [1,T]");
    require_same_shape(z0, eps, "forward_diffuse");
    const double a = std::sqrt(s.a_bar(t));
    const double b = std::sqrt(1.0 - s.a_bar(t));
    Tensor out(z0.shape);
    for (std::int64_t i = 0; i < z0.numel(); ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

ad::Var forward_diffuse(const ad::Var& z0, int t, const Tensor& eps, const NoiseSchedule& s) {
    if (t < 1 || t > s.T) throw ValidationError("forward_diffuse: t out of [1,T]");
    require_same_shape(z0.val(), eps, "forward_diffuse");
    const double a = std::sqrt(s.a_bar(t));
    const double b = std::sqrt(1.0 - s.a_bar(t));
    Tensor scaled_eps(eps.shape);
    for (std::int64_t i = 0; i < eps.numel(); ++i) scaled_eps[i] = b * eps[i];
    return ad::add(ad::scale(z0, a), ad::constant(std::move(scaled_eps)));
}

Tensor z0_estimate(const Tensor& z_t, int t, const Tensor& eps_hat, const NoiseSchedule& s) {
    if (t < 1 || t > s.T) throw ValidationError("z0_estimate: t out of [1,T]");
    require_same_shape(z_t, eps_hat, "z0_estimate");
    const double a = std::sqrt(s.a_bar(t));
    const double b = std::sqrt(1.0 - s.a_bar(t));
    Tensor out(z_t.shape);
    for (std::int64_t i = 0; i < z_t.numel(); ++i) out[i] = (z_t[i] - b * eps_hat[i]) / a;
    return out;
}

ad::Var z0_estimate(const ad::Var& z_t, int t, const ad::Var& eps_hat, const NoiseSchedule& s) {
    if (t < 1 || t > s.T) throw ValidationError("z0_estimate: t out of [1,T]");
    const double a = std::sqrt(s.a_bar(t));
    const double b = std::sqrt(1.0 - s.a_bar(t));
    return ad::scale(ad::sub(z_t, ad::scale(eps_hat, b)), 1.0 / a);
}

Denoiser::Denoiser(nn::ParamStore& ps, const std::string& prefix, DenoiserConfig cfg, Rng& rng)
    : cfg_(cfg) {
    const int cin = cfg.k + cfg.cond;
    in_ = nn::Conv3dLayer::create(ps, prefix + ".in", cin, cfg.base, 3, 1, 1, rng);
    enc1_ = nn::ResBlock3d::create(ps, prefix + ".enc1", cfg.base, cfg.base, 1, cfg.time_dim, rng);
    down_ = nn::ResBlock3d::create(ps, prefix + ".down", cfg.base, cfg.mid, 2, cfg.time_dim, rng);
    attn_ = nn::SpatialSelfAttention::create(ps, prefix + ".attn", cfg.mid, cfg.heads, rng);
    bottleneck_ =
        nn::ResBlock3d::create(ps, prefix + ".bott", cfg.mid, cfg.mid, 1, cfg.time_dim, rng);
    up_ = nn::ConvTranspose3dLayer::create(ps, prefix + ".up", cfg.mid, cfg.base, 2, 2, 0, rng);
    dec1_ = nn::ResBlock3d::create(ps, prefix + ".dec1", 2 * cfg.base, cfg.base, 1, cfg.time_dim,
                                   rng);
    out_norm_ = nn::GroupNormLayer::create(ps, prefix + ".out_norm", cfg.base);
    // zero-init head: the net starts as the zero noise predictor
    out_ = nn::Conv3dLayer::create(ps, prefix + ".out", cfg.base, cfg.k, 3, 1, 1, rng, true);
    initialized_ = true;
}

ad::Var Denoiser::forward(const ad::Var& noisy, const ad::Var& cond,
                          const std::vector<int>& t) const {
    if (!initialized_) throw StateError("denoiser not initialized");
    const Tensor& nv = noisy.val();
    const Tensor& cv = cond.val();
    if (nv.ndim() != 5 || cv.ndim() != 5 || nv.shape[1] != cfg_.k || cv.shape[1] != cfg_.cond)
        throw ShapeError("denoiser: bad channel counts");
    for (int i : {0, 2, 3, 4})
        if (nv.shape[i] != cv.shape[i])
            throw ShapeError("denoiser: latent and condition grids differ: " +
                             shape_str(nv.shape) + " vs " + shape_str(cv.shape));
    const int B = nv.shape[0];
    if (static_cast<int>(t.size()) != B) throw ShapeError("denoiser: one timestep per sample");

    Tensor temb({B, cfg_.time_dim});
    for (int b = 0; b < B; ++b) {
        Tensor e = nn::sinusoidal_time_embedding(t[static_cast<size_t>(b)], cfg_.time_dim);
        for (int i = 0; i < cfg_.time_dim; ++i) temb.at(b, i) = e[i];
    }
    ad::Var te = ad::constant(std::move(temb));

    // two channel groups: noisy latent and cross-modal condition
    ad::Var h = in_.forward(ad::concat_axis1(noisy, cond));
    ad::Var e1 = enc1_.forward(h, te);
    ad::Var d = down_.forward(e1, te);
    d = attn_.forward(d);
    d = bottleneck_.forward(d, te);
    ad::Var u = up_.forward(d);
    ad::Var merged = ad::concat_axis1(u, e1);  // skip connection
    ad::Var out = dec1_.forward(merged, te);
    out = out_.forward(ad::silu(out_norm_.forward(out)));
    if (ad::debug::check_numerics) ad::check_finite(out, "predicted noise");
    return out;
}

Tensor Denoiser::predict_noise(const Tensor& noisy, const Tensor& cond, int t) const {
    ad::NoGradGuard ng;
    ad::Var n = ad::constant(
        noisy.reshaped({1, noisy.shape[0], noisy.shape[1], noisy.shape[2], noisy.shape[3]}));
    ad::Var c = ad::constant(
        cond.reshaped({1, cond.shape[0], cond.shape[1], cond.shape[2], cond.shape[3]}));
    Tensor out = forward(n, c, {t}).val();
    return out.reshaped({out.shape[1], out.shape[2], out.shape[3], out.shape[4]});
}

std::vector<int> ddim_timesteps(int T, int steps) {
    if (steps < 1) throw ValidationError("ddim: steps must be >= 1");
    if (steps > T) throw ValidationError("ddim: steps exceed schedule length");
    const int stride = T / steps;
    std::vector<int> ts;
    ts.reserve(static_cast<size_t>(steps) + 1);
    for (int j = 0; j < steps; ++j) ts.push_back(T - j * stride);
    ts.push_back(0);
    return ts;
}

Tensor ddim_sample(const Shape& latent_shape, int steps, const NoiseSchedule& s,
                   const DenoiseFn& denoise, std::uint64_t seed) {
    const std::vector<int> ts = ddim_timesteps(s.T, steps);
    Rng rng(seed);
    Tensor z = Tensor::randn(rng, latent_shape);
    for (size_t j = 0; j + 1 < ts.size(); ++j) {
        const int t = ts[j];
        const int t_prev = ts[j + 1];
        const Tensor eps_hat = denoise(z, t);
        require_same_shape(z, eps_hat, "ddim denoiser output");
        const double a_t = std::sqrt(s.a_bar(t));
        const double b_t = std::sqrt(1.0 - s.a_bar(t));
        const double a_p = std::sqrt(s.a_bar(t_prev));
        const double b_p = std::sqrt(1.0 - s.a_bar(t_prev));
        for (std::int64_t i = 0; i < z.numel(); ++i) {
            const double z0 = (z[i] - b_t * eps_hat[i]) / a_t;
            z[i] = a_p * z0 + b_p * eps_hat[i];  // eta = 0
        }
    }
    return z;
}

}  // namespace tgseg
