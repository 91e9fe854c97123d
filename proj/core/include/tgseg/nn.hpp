#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tgseg/autodiff.hpp"
#include "tgseg/rng.hpp"

namespace tgseg::nn {

// Named registry for trainable tensors and persistent buffers (running
// statistics). Construction order is deterministic, so names and ordering
// are stable across runs — the checkpoint format relies on that.
class ParamStore {
public:
    ad::Var param(const std::string& name, Tensor init);
    std::shared_ptr<Tensor> buffer(const std::string& name, Tensor init);

    const std::vector<std::pair<std::string, ad::Var>>& params() const { return params_; }
    const std::vector<std::pair<std::string, std::shared_ptr<Tensor>>>& buffers() const {
        return buffers_;
    }
    ad::Var* find_param(const std::string& name);
    std::int64_t total_params() const;
    void zero_grad();

private:
    std::vector<std::pair<std::string, ad::Var>> params_;
    std::vector<std::pair<std::string, std::shared_ptr<Tensor>>> buffers_;
};

// He-style initializers
Tensor init_conv_weight(Rng& rng, int cout, int cin, int k);
Tensor init_linear_weight(Rng& rng, int in, int out);

struct Linear {
    ad::Var w, b;  // w: [in, out]
    static Linear create(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
                         bool zero_init = false);
    ad::Var forward(const ad::Var& x) const;  // [R,in] -> [R,out]
};

struct Conv3dLayer {
    ad::Var w, b;
    int stride = 1, pad = 0;
    // with_bias=false keeps a frozen zero bias (for convs feeding a
    // normalization layer, where a bias is exactly cancelled).
    static Conv3dLayer create(ParamStore& ps, const std::string& name, int cin, int cout, int k,
                              int stride, int pad, Rng& rng, bool zero_init = false,
                              bool with_bias = true);
    ad::Var forward(const ad::Var& x) const;
};

struct ConvTranspose3dLayer {
    ad::Var w, b;  // w: [cin, cout, k, k, k]
    int stride = 2, pad = 0;
    static ConvTranspose3dLayer create(ParamStore& ps, const std::string& name, int cin, int cout,
                                       int k, int stride, int pad, Rng& rng);
    ad::Var forward(const ad::Var& x) const;
};

// Kernel symmetrized over all axis flips, which makes the layer exactly
// equivariant under spatial flips of its input.
ad::Var symmetrize_kernel(const ad::Var& w);

struct SymConv3dLayer {
    ad::Var w_raw, b;
    int pad = 1;
    static SymConv3dLayer create(ParamStore& ps, const std::string& name, int cin, int cout, int k,
                                 int pad, Rng& rng);
    ad::Var forward(const ad::Var& x) const;
};

// Largest divisor of c not exceeding 8 (micro models have fewer channels
// than the default 8 groups).
int gn_groups(int c);

struct GroupNormLayer {
    ad::Var gamma, beta;
    int groups = 8;
    static GroupNormLayer create(ParamStore& ps, const std::string& name, int c);
    ad::Var forward(const ad::Var& x) const;
};

// Per-channel standardization with running statistics; no affine part, so
// outputs stay mean 0 / std 1 by construction.
struct BatchStdLayer {
    std::shared_ptr<Tensor> running_mean, running_var;
    double momentum = 0.1;
    static BatchStdLayer create(ParamStore& ps, const std::string& name, int c);
    ad::Var forward(const ad::Var& x, bool training) const;
};

// Self-attention over flattened spatial positions of a [B,C,D,H,W] field.
// When `capture` is set, each forward stores the per-sample, per-head
// softmax matrices for inspection.
struct SpatialSelfAttention {
    Linear qkv, proj;
    int heads = 1;
    int channels = 0;
    std::shared_ptr<std::vector<Tensor>> capture;
    static SpatialSelfAttention create(ParamStore& ps, const std::string& name, int c, int heads,
                                       Rng& rng);
    ad::Var forward(const ad::Var& x) const;
};

// Pre-activation residual block, optional stride-2 downsample on the first
// conv and optional additive time-embedding injection.
struct ResBlock3d {
    GroupNormLayer n1, n2;
    Conv3dLayer c1, c2, skip;
    bool has_skip = false;
    Linear time_proj;
    bool has_time = false;
    static ResBlock3d create(ParamStore& ps, const std::string& name, int cin, int cout,
                             int stride, int time_dim, Rng& rng);
    // temb: [B, time_dim] or undefined
    ad::Var forward(const ad::Var& x, const ad::Var& temb = ad::Var()) const;
};

// Sinusoidal embedding of an integer timestep, width must be even.
Tensor sinusoidal_time_embedding(int t, int width);

}  // namespace tgseg::nn
