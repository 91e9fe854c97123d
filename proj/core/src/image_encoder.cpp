#include "tgseg/image_encoder.hpp"

namespace tgseg {

ImageEncoder::ImageEncoder(nn::ParamStore& ps, const std::string& prefix, ImageEncoderConfig cfg,
                           Rng& rng)
    : cfg_(cfg) {
    if (cfg.simple) {
        simple_proj_ = nn::Conv3dLayer::create(ps, prefix + ".proj", 1, cfg.c, 1, 1, 0, rng);
    } else {
        stem_ = nn::Conv3dLayer::create(ps, prefix + ".stem", 1, cfg.stem, 3, 1, 1, rng);
        down1_ = nn::ResBlock3d::create(ps, prefix + ".down1", cfg.stem, cfg.mid, 2, 0, rng);
        down2_ = nn::ResBlock3d::create(ps, prefix + ".down2", cfg.mid, cfg.c, 2, 0, rng);
        res3_ = nn::ResBlock3d::create(ps, prefix + ".res3", cfg.c, cfg.c, 1, 0, rng);
        attn3_ = nn::SpatialSelfAttention::create(ps, prefix + ".attn3", cfg.c, cfg.heads, rng);
        res4_ = nn::ResBlock3d::create(ps, prefix + ".res4", cfg.c, cfg.c, 1, 0, rng);
        attn4_ = nn::SpatialSelfAttention::create(ps, prefix + ".attn4", cfg.c, cfg.heads, rng);
    }
    initialized_ = true;
}

ad::Var ImageEncoder::forward(const ad::Var& x) const {
    if (!initialized_) throw StateError("image encoder not initialized");
    const Tensor& xv = x.val();
    if (xv.ndim() != 5 || xv.shape[1] != 1) throw ShapeError("image encoder: need [B,1,D,H,W]");
    for (int i = 2; i < 5; ++i)
        if (xv.shape[i] % cfg_.stride)
            throw ShapeError("image encoder: dim " + std::to_string(xv.shape[i]) +
                             " not divisible by stride " + std::to_string(cfg_.stride));
    ad::Var h;
    if (cfg_.simple) {
        h = simple_proj_.forward(ad::avg_pool3d(x, cfg_.stride));
    } else {
        h = stem_.forward(x);
        h = down1_.forward(h);
        h = down2_.forward(h);
        h = attn3_.forward(res3_.forward(h));
        h = attn4_.forward(res4_.forward(h));
    }
    if (ad::debug::check_numerics) ad::check_finite(h, "image latent");
    return h;
}

LatentGrid ImageEncoder::encode(const Tensor& patch) const {
    if (patch.ndim() != 3) throw ShapeError("encode: need [D,H,W] patch");
    ad::NoGradGuard ng;
    ad::Var x = ad::constant(patch.reshaped({1, 1, patch.shape[0], patch.shape[1], patch.shape[2]}));
    Tensor out = forward(x).val();
    LatentGrid g;
    g.stride = cfg_.stride;
    g.values = out.reshaped({out.shape[1], out.shape[2], out.shape[3], out.shape[4]});
    return g;
}

std::shared_ptr<std::vector<Tensor>> ImageEncoder::attention_capture(bool on) {
    auto buf = on ? std::make_shared<std::vector<Tensor>>() : nullptr;
    attn3_.capture = buf;
    attn4_.capture = buf;
    return buf;
}

}  // namespace tgseg
