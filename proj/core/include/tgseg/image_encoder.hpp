#pragma once

#include "tgseg/nn.hpp"

namespace tgseg {

// Compact volumetric embedding of an image patch: c x d x h x w at a fixed
// spatial stride relative to the input.
struct LatentGrid {
    Tensor values;  // [c,d,h,w]
    int stride = 4;
};

struct ImageEncoderConfig {
    int c = 32;        // output channels
    int stem = 16;     // stem width
    int mid = 24;      // width after the first downsample
    int heads = 4;     // attention heads in the last two stages
    int stride = 4;    // fixed by the two stride-2 stages
    bool simple = false;  // downsample-only variant
};

// Stem conv, two stride-2 residual stages, then two residual stages with
// multi-head self-attention at constant resolution. The `simple` variant
// replaces all of it with average pooling plus a 1x1x1 projection.
class ImageEncoder {
public:
    ImageEncoder() = default;
    ImageEncoder(nn::ParamStore& ps, const std::string& prefix, ImageEncoderConfig cfg, Rng& rng);

    // x: [B,1,D,H,W], dims divisible by stride. Returns [B,c,D/4,H/4,W/4].
    ad::Var forward(const ad::Var& x) const;

    // Evaluation-mode convenience on a raw [D,H,W] patch.
    LatentGrid encode(const Tensor& patch) const;

    const ImageEncoderConfig& config() const { return cfg_; }
    // per-head softmax matrices of the last forward, when capture enabled
    std::shared_ptr<std::vector<Tensor>> attention_capture(bool on);

private:
    ImageEncoderConfig cfg_;
    nn::Conv3dLayer stem_;
    nn::ResBlock3d down1_, down2_, res3_, res4_;
    nn::SpatialSelfAttention attn3_, attn4_;
    nn::Conv3dLayer simple_proj_;
    bool initialized_ = false;
};

}  // namespace tgseg
