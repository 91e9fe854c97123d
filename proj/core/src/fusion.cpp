#include "tgseg/fusion.hpp"

#include <cmath>

namespace tgseg {

FusionBlock::FusionBlock(nn::ParamStore& ps, const std::string& prefix, FusionConfig cfg,
                         Rng& rng)
    : cfg_(cfg) {
    if (cfg.concat_ablation) {
        concat_proj_ = nn::Conv3dLayer::create(ps, prefix + ".concat", cfg.c + cfg.d_t, cfg.c, 1,
                                               1, 0, rng);
    } else {
        const double sq = std::sqrt(1.0 / cfg.c);
        const double sk = std::sqrt(1.0 / cfg.d_t);
        w_q_ = ps.param(prefix + ".w_q", Tensor::randn(rng, {cfg.c, cfg.d_k}, sq));
        w_k_ = ps.param(prefix + ".w_k", Tensor::randn(rng, {cfg.d_t, cfg.d_k}, sk));
        w_v_ = ps.param(prefix + ".w_v", Tensor::randn(rng, {cfg.d_t, cfg.c}, sk));
    }
    initialized_ = true;
}

ad::Var FusionBlock::forward(const ad::Var& z_i, const ad::Var& text_rows) const {
    if (!initialized_) throw StateError("fusion block not initialized");
    const Tensor& zv = z_i.val();
    const Tensor& tv = text_rows.val();
    if (zv.ndim() != 4 || zv.shape[0] != cfg_.c)
        throw ShapeError("fuse: latent must be [c,d,h,w] with c=" + std::to_string(cfg_.c));
    if (tv.ndim() != 2 || tv.shape[1] != cfg_.d_t)
        throw ShapeError("fuse: text rows must be [L," + std::to_string(cfg_.d_t) + "]");
    const int S = zv.shape[1] * zv.shape[2] * zv.shape[3];

    if (cfg_.concat_ablation) {
        // broadcast the pooled text vector over space, concat, 1x1 mix
        if (tv.shape[0] != 1) throw ShapeError("fuse (concat): expected the pooled [1,d_t] row");
        ad::Var col = ad::transpose2d(text_rows);  // [d_t,1]
        ad::Var ones = ad::constant(Tensor::full({1, S}, 1.0));
        ad::Var field = ad::reshape(ad::matmul(col, ones),
                                    {1, cfg_.d_t, zv.shape[1], zv.shape[2], zv.shape[3]});
        ad::Var z5 = ad::reshape(z_i, {1, cfg_.c, zv.shape[1], zv.shape[2], zv.shape[3]});
        ad::Var mixed = concat_proj_.forward(ad::concat_axis1(z5, field));
        return ad::reshape(mixed, zv.shape);
    }

    ad::Var q = ad::matmul(ad::transpose2d(ad::reshape(z_i, {cfg_.c, S})), w_q_);  // [S,d_k]
    ad::Var k = ad::matmul(text_rows, w_k_);                                       // [L,d_k]
    ad::Var v = ad::matmul(text_rows, w_v_);                                       // [L,c]
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg_.d_k));
    ad::Var attn = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose2d(k)), inv_sqrt));
    if (capture) capture->push_back(attn.val());
    ad::Var ctx = ad::matmul(attn, v);  // [S,c]
    ad::Var fused = ad::add(z_i, ad::reshape(ad::transpose2d(ctx), zv.shape));
    if (ad::debug::check_numerics) ad::check_finite(fused, "fused conditioning");
    return fused;
}

}  // namespace tgseg
