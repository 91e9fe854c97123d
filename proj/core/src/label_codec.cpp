#include "tgseg/label_codec.hpp"

#include <cmath>

namespace tgseg {

Tensor one_hot(const Tensor& labels, int num_classes) {
    if (labels.ndim() != 3 && labels.ndim() != 4) throw ShapeError("one_hot: need 3/4-D labels");
    const bool batched = labels.ndim() == 4;
    const int B = batched ? labels.shape[0] : 1;
    const std::int64_t S = labels.numel() / B;
    Shape os;
    if (batched)
        os = {B, num_classes, labels.shape[1], labels.shape[2], labels.shape[3]};
    else
        os = {1, num_classes, labels.shape[0], labels.shape[1], labels.shape[2]};
    Tensor out(os);
    for (int b = 0; b < B; ++b)
        for (std::int64_t i = 0; i < S; ++i) {
            const double v = labels.data[static_cast<size_t>(b * S + i)];
            const double r = std::round(v);
            if (v != r || r < 0 || r >= num_classes)
                throw ValidationError("one_hot: label value " + std::to_string(v) +
                                      " outside [0, " + std::to_string(num_classes - 1) + "]");
            out.data[(static_cast<std::int64_t>(b) * num_classes + static_cast<int>(r)) * S + i] =
                1.0;
        }
    return out;
}

std::vector<int> label_ids(const Tensor& labels, int num_classes) {
    std::vector<int> ids(static_cast<size_t>(labels.numel()));
    for (std::int64_t i = 0; i < labels.numel(); ++i) {
        const double v = labels[i];
        const double r = std::round(v);
        if (v != r || r < 0 || r >= num_classes)
            throw ValidationError("label value " + std::to_string(v) + " outside class range");
        ids[static_cast<size_t>(i)] = static_cast<int>(r);
    }
    return ids;
}

LabelEncoder::LabelEncoder(nn::ParamStore& ps, const std::string& prefix, LabelCodecConfig cfg,
                           Rng& rng)
    : cfg_(cfg) {
    if (cfg.simple) {
        simple_proj_ = nn::Conv3dLayer::create(ps, prefix + ".proj", cfg.num_classes, cfg.k,
                                               1, 1, 0, rng, false, /*with_bias=*/false);
    } else {
        e1_ = nn::SymConv3dLayer::create(ps, prefix + ".e1", cfg.num_classes, cfg.enc_w, 3, 1, rng);
        e2_ = nn::SymConv3dLayer::create(ps, prefix + ".e2", cfg.enc_w, cfg.enc_w, 3, 1, rng);
        head_ = nn::Conv3dLayer::create(ps, prefix + ".head", cfg.enc_w, cfg.k, 1, 1, 0, rng,
                                        false, /*with_bias=*/false);
    }
    norm_ = nn::BatchStdLayer::create(ps, prefix + ".norm", cfg.k);
    initialized_ = true;
}

ad::Var LabelEncoder::forward(const ad::Var& onehot, bool training) const {
    if (!initialized_) throw StateError("label encoder not initialized");
    const Tensor& xv = onehot.val();
    if (xv.ndim() != 5 || xv.shape[1] != cfg_.num_classes)
        throw ShapeError("label encoder: need [B,N,D,H,W]");
    for (int i = 2; i < 5; ++i)
        if (xv.shape[i] % cfg_.stride)
            throw ShapeError("label encoder: dims not divisible by stride");
    ad::Var h;
    if (cfg_.simple) {
        h = simple_proj_.forward(ad::avg_pool3d(onehot, cfg_.stride));
    } else {
        h = ad::silu(e1_.forward(onehot));
        h = ad::avg_pool3d(h, 2);
        h = ad::silu(e2_.forward(h));
        h = ad::avg_pool3d(h, 2);
        h = head_.forward(h);
    }
    ad::Var z = norm_.forward(h, training);
    if (ad::debug::check_numerics) ad::check_finite(z, "label latent");
    return z;
}

LabelLatent LabelEncoder::encode(const Tensor& label_patch) const {
    ad::NoGradGuard ng;
    Tensor oh = one_hot(label_patch, cfg_.num_classes);
    Tensor out = forward(ad::constant(oh), false).val();
    LabelLatent l;
    l.values = out.reshaped({out.shape[1], out.shape[2], out.shape[3], out.shape[4]});
    l.normalized = true;
    l.stride = cfg_.stride;
    return l;
}

LabelDecoder::LabelDecoder(nn::ParamStore& ps, const std::string& prefix, LabelCodecConfig cfg,
                           Rng& rng)
    : cfg_(cfg) {
    in_ = nn::Conv3dLayer::create(ps, prefix + ".in", cfg.k, cfg.dec_w1, 3, 1, 1, rng);
    up1_ = nn::ConvTranspose3dLayer::create(ps, prefix + ".up1", cfg.dec_w1, cfg.dec_w2, 2, 2, 0,
                                            rng);
    gn1_ = nn::GroupNormLayer::create(ps, prefix + ".gn1", cfg.dec_w2);
    mid_ = nn::Conv3dLayer::create(ps, prefix + ".mid", cfg.dec_w2, cfg.dec_w2, 3, 1, 1, rng);
    up2_ = nn::ConvTranspose3dLayer::create(ps, prefix + ".up2", cfg.dec_w2, cfg.dec_w2, 2, 2, 0,
                                            rng);
    gn2_ = nn::GroupNormLayer::create(ps, prefix + ".gn2", cfg.dec_w2);
    head_ = nn::Conv3dLayer::create(ps, prefix + ".head", cfg.dec_w2, cfg.num_classes, 1, 1, 0,
                                    rng);
    initialized_ = true;
}

ad::Var softmax_channels(const ad::Var& x) {
    const Tensor& xv = x.val();
    if (xv.ndim() != 5) throw ShapeError("softmax_channels: need 5-D");
    const int B = xv.shape[0], N = xv.shape[1];
    const int S = xv.shape[2] * xv.shape[3] * xv.shape[4];
    std::vector<ad::Var> outs;
    outs.reserve(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) {
        ad::Var flat = ad::reshape(ad::slice_batch(x, b), {N, S});
        ad::Var probs = ad::transpose2d(ad::softmax_rows(ad::transpose2d(flat)));
        outs.push_back(ad::reshape(probs, {N, xv.shape[2], xv.shape[3], xv.shape[4]}));
    }
    return ad::join_batch(outs);
}

ad::Var LabelDecoder::forward(const ad::Var& latent) const {
    if (!initialized_) throw StateError("label decoder not initialized");
    const Tensor& xv = latent.val();
    if (xv.ndim() != 5 || xv.shape[1] != cfg_.k) throw ShapeError("label decoder: need [B,k,d,h,w]");
    ad::Var h = ad::silu(in_.forward(latent));
    h = ad::silu(gn1_.forward(up1_.forward(h)));
    h = ad::silu(mid_.forward(h));
    h = ad::silu(gn2_.forward(up2_.forward(h)));
    ad::Var probs = softmax_channels(head_.forward(h));
    if (ad::debug::check_numerics) ad::check_finite(probs, "decoded probabilities");
    return probs;
}

Tensor LabelDecoder::decode(const Tensor& latent) const {
    if (latent.ndim() != 4) throw ShapeError("decode: need [k,d,h,w]");
    ad::NoGradGuard ng;
    ad::Var x = ad::constant(
        latent.reshaped({1, latent.shape[0], latent.shape[1], latent.shape[2], latent.shape[3]}));
    Tensor out = forward(x).val();
    return out.reshaped({out.shape[1], out.shape[2], out.shape[3], out.shape[4]});
}

}  // namespace tgseg
