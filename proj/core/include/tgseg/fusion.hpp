#pragma once

#include "tgseg/nn.hpp"

namespace tgseg {

enum class TextFusionMode {
    pooled,     // single pooled vector as the key/value row (softmax over one key)
    per_token,  // pre-pooled token features as key/value rows
};

struct FusionConfig {
    int c = 32;
    int d_t = 64;
    int d_k = 32;
    TextFusionMode mode = TextFusionMode::per_token;
    bool concat_ablation = false;  // broadcast + channel concat + 1x1 instead of attention
};

// Residual cross-attention of a volumetric latent against text rows:
//   fused = z_i + reshape(softmax(z_i' W_q (rows W_k)^T / sqrt(d_k)) rows W_v)
// with z_i' the voxel sequence. Single-head.
class FusionBlock {
public:
    FusionBlock() = default;
    FusionBlock(nn::ParamStore& ps, const std::string& prefix, FusionConfig cfg, Rng& rng);

    // z_i: [c,d,h,w] (one sample), text_rows: [L,d_t]. Returns [c,d,h,w].
    // In concat-ablation mode only the first row (pooled embedding) is used.
    ad::Var forward(const ad::Var& z_i, const ad::Var& text_rows) const;

    // raw attention weights [S,L] of the last forward when capture enabled
    std::shared_ptr<std::vector<Tensor>> capture;

    const FusionConfig& config() const { return cfg_; }
    ad::Var w_q() const { return w_q_; }
    ad::Var w_k() const { return w_k_; }
    ad::Var w_v() const { return w_v_; }

private:
    FusionConfig cfg_;
    ad::Var w_q_, w_k_, w_v_;       // attention path
    nn::Conv3dLayer concat_proj_;   // ablation path: (c + d_t) -> c, 1x1x1
    bool initialized_ = false;
};

}  // namespace tgseg
