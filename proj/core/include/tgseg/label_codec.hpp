#pragma once

#include "tgseg/nn.hpp"

namespace tgseg {

// Continuous latent for a discrete label patch; per-channel standardized
// when produced by the encoder's final normalization layer.
struct LabelLatent {
    Tensor values;  // [k,d,h,w]
    bool normalized = false;
    int stride = 4;
};

struct LabelCodecConfig {
    int num_classes = 2;
    int k = 4;        // latent channels
    int stride = 4;
    int enc_w = 12;   // encoder hidden width
    int dec_w1 = 16;  // decoder widths, low resolution first
    int dec_w2 = 12;
    bool simple = false;  // pooling-only encoder variant
};

// One-hot expansion of an integral [D,H,W] (or [B,D,H,W]) label field.
Tensor one_hot(const Tensor& labels, int num_classes);
// Flattened z-major target ids for the loss path.
std::vector<int> label_ids(const Tensor& labels, int num_classes);

// Shape-aware encoder: flip-symmetric convs and average pooling only, so
// encode(flip(y)) == flip(encode(y)) holds exactly, with a standardizing
// output layer. The simple variant is average pooling plus 1x1x1 projection.
class LabelEncoder {
public:
    LabelEncoder() = default;
    LabelEncoder(nn::ParamStore& ps, const std::string& prefix, LabelCodecConfig cfg, Rng& rng);

    // onehot: [B,N,D,H,W] -> standardized latent [B,k,D/4,H/4,W/4]
    ad::Var forward(const ad::Var& onehot, bool training) const;

    // Evaluation-mode convenience on an integral [D,H,W] label patch.
    LabelLatent encode(const Tensor& label_patch) const;

    const LabelCodecConfig& config() const { return cfg_; }

private:
    LabelCodecConfig cfg_;
    nn::SymConv3dLayer e1_, e2_;
    nn::Conv3dLayer head_, simple_proj_;
    nn::BatchStdLayer norm_;
    bool initialized_ = false;
};

// Mirror decoder without skip connections: transposed-conv upsampling back
// to full resolution, N-channel head, softmax over classes.
class LabelDecoder {
public:
    LabelDecoder() = default;
    LabelDecoder(nn::ParamStore& ps, const std::string& prefix, LabelCodecConfig cfg, Rng& rng);

    // latent: [B,k,d,h,w] -> per-voxel class probabilities [B,N,4d,4h,4w]
    ad::Var forward(const ad::Var& latent) const;

    // Evaluation-mode convenience: [k,d,h,w] -> [N,D,H,W]
    Tensor decode(const Tensor& latent) const;

    const LabelCodecConfig& config() const { return cfg_; }

private:
    LabelCodecConfig cfg_;
    nn::Conv3dLayer in_, mid_, head_;
    nn::ConvTranspose3dLayer up1_, up2_;
    nn::GroupNormLayer gn1_, gn2_;
    bool initialized_ = false;
};

// softmax over axis 1 of a [B,N,...] field
ad::Var softmax_channels(const ad::Var& x);

}  // namespace tgseg
