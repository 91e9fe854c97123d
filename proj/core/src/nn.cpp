#include "tgseg/nn.hpp"

#include <cmath>

namespace tgseg::nn {

using ad::Var;

ad::Var ParamStore::param(const std::string& name, Tensor init) {
    for (const auto& [n, v] : params_)
        if (n == name) throw StateError("duplicate parameter name: " + name);
    Var v = ad::make_param(std::move(init));
    params_.emplace_back(name, v);
    return v;
}

std::shared_ptr<Tensor> ParamStore::buffer(const std::string& name, Tensor init) {
    for (const auto& [n, v] : buffers_)
        if (n == name) throw StateError("duplicate buffer name: " + name);
    auto t = std::make_shared<Tensor>(std::move(init));
    buffers_.emplace_back(name, t);
    return t;
}

ad::Var* ParamStore::find_param(const std::string& name) {
    for (auto& [n, v] : params_)
        if (n == name) return &v;
    return nullptr;
}

std::int64_t ParamStore::total_params() const {
    std::int64_t n = 0;
    for (const auto& [name, v] : params_) n += v.val().numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [name, v] : params_) {
        v.node()->ensure_grad();
        std::fill(v.node()->grad.data.begin(), v.node()->grad.data.end(), 0.0);
    }
}

Tensor init_conv_weight(Rng& rng, int cout, int cin, int k) {
    const double std = std::sqrt(2.0 / (static_cast<double>(cin) * k * k * k));
    return Tensor::randn(rng, {cout, cin, k, k, k}, std);
}

Tensor init_linear_weight(Rng& rng, int in, int out) {
    const double std = std::sqrt(2.0 / static_cast<double>(in));
    return Tensor::randn(rng, {in, out}, std);
}

Linear Linear::create(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
                      bool zero_init) {
    Linear l;
    l.w = ps.param(name + ".w",
                   zero_init ? Tensor::zeros({in, out}) : init_linear_weight(rng, in, out));
    l.b = ps.param(name + ".b", Tensor::zeros({out}));
    return l;
}

Var Linear::forward(const Var& x) const { return ad::add_row_bias(ad::matmul(x, w), b); }

Conv3dLayer Conv3dLayer::create(ParamStore& ps, const std::string& name, int cin, int cout, int k,
                                int stride, int pad, Rng& rng, bool zero_init, bool with_bias) {
    Conv3dLayer c;
    c.stride = stride;
    c.pad = pad;
    c.w = ps.param(name + ".w", zero_init ? Tensor::zeros({cout, cin, k, k, k})
                                          : init_conv_weight(rng, cout, cin, k));
    c.b = with_bias ? ps.param(name + ".b", Tensor::zeros({cout}))
                    : ad::constant(Tensor::zeros({cout}));
    return c;
}

Var Conv3dLayer::forward(const Var& x) const { return ad::conv3d(x, w, b, stride, pad); }

ConvTranspose3dLayer ConvTranspose3dLayer::create(ParamStore& ps, const std::string& name,
                                                  int cin, int cout, int k, int stride, int pad,
                                                  Rng& rng) {
    ConvTranspose3dLayer c;
    c.stride = stride;
    c.pad = pad;
    const double std = std::sqrt(2.0 / (static_cast<double>(cin) * k * k * k));
    c.w = ps.param(name + ".w", Tensor::randn(rng, {cin, cout, k, k, k}, std));
    c.b = ps.param(name + ".b", Tensor::zeros({cout}));
    return c;
}

Var ConvTranspose3dLayer::forward(const Var& x) const {
    return ad::conv_transpose3d(x, w, b, stride, pad);
}

ad::Var symmetrize_kernel(const ad::Var& w) {
    const Tensor& wv = w.val();
    if (wv.ndim() != 5) throw ShapeError("symmetrize_kernel: need 5-D weight");
    const int n0 = wv.shape[0], n1 = wv.shape[1];
    const int kd = wv.shape[2], kh = wv.shape[3], kw = wv.shape[4];
    auto symmetrize = [=](const Tensor& src) {
        Tensor out(src.shape);
        for (int a = 0; a < n0; ++a)
            for (int b = 0; b < n1; ++b)
                for (int z = 0; z < kd; ++z)
                    for (int y = 0; y < kh; ++y)
                        for (int x = 0; x < kw; ++x) {
                            double acc = 0.0;
                            for (int f = 0; f < 8; ++f) {
                                const int zz = (f & 1) ? kd - 1 - z : z;
                                const int yy = (f & 2) ? kh - 1 - y : y;
                                const int xx = (f & 4) ? kw - 1 - x : x;
                                acc += src.at(a, b, zz, yy, xx);
                            }
                            out.at(a, b, z, y, x) = acc / 8.0;
                        }
        return out;
    };
    Tensor out = symmetrize(wv);
    return ad::detail::make_op(std::move(out), {w}, [symmetrize](ad::Node& n) {
        // linear and self-adjoint
        Tensor dg = symmetrize(n.grad);
        n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < dg.numel(); ++i) n.parents[0]->grad[i] += dg[i];
    });
}

SymConv3dLayer SymConv3dLayer::create(ParamStore& ps, const std::string& name, int cin, int cout,
                                      int k, int pad, Rng& rng) {
    SymConv3dLayer c;
    c.pad = pad;
    c.w_raw = ps.param(name + ".w", init_conv_weight(rng, cout, cin, k));
    c.b = ps.param(name + ".b", Tensor::zeros({cout}));
    return c;
}

Var SymConv3dLayer::forward(const Var& x) const {
    return ad::conv3d(x, symmetrize_kernel(w_raw), b, 1, pad);
}

int gn_groups(int c) {
    // groups span >= 2 channels so per-channel information survives the norm
    const int cap = std::max(1, std::min(8, c / 2));
    for (int g = cap; g >= 1; --g)
        if (c % g == 0) return g;
    return 1;
}

GroupNormLayer GroupNormLayer::create(ParamStore& ps, const std::string& name, int c) {
    GroupNormLayer g;
    g.groups = gn_groups(c);
    g.gamma = ps.param(name + ".gamma", Tensor::full({c}, 1.0));
    g.beta = ps.param(name + ".beta", Tensor::zeros({c}));
    return g;
}

Var GroupNormLayer::forward(const Var& x) const {
    return ad::group_norm(x, groups, gamma, beta);
}

BatchStdLayer BatchStdLayer::create(ParamStore& ps, const std::string& name, int c) {
    BatchStdLayer b;
    b.running_mean = ps.buffer(name + ".running_mean", Tensor::zeros({c}));
    b.running_var = ps.buffer(name + ".running_var", Tensor::full({c}, 1.0));
    return b;
}

Var BatchStdLayer::forward(const Var& x, bool training) const {
    return ad::batch_standardize(x, *running_mean, *running_var, training, momentum);
}

SpatialSelfAttention SpatialSelfAttention::create(ParamStore& ps, const std::string& name, int c,
                                                  int heads, Rng& rng) {
    if (c % heads) throw ShapeError("attention: channels % heads != 0");
    SpatialSelfAttention a;
    a.heads = heads;
    a.channels = c;
    a.qkv = Linear::create(ps, name + ".qkv", c, 3 * c, rng);
    a.proj = Linear::create(ps, name + ".proj", c, c, rng);
    return a;
}

Var SpatialSelfAttention::forward(const Var& x) const {
    const Tensor& xv = x.val();
    if (xv.ndim() != 5 || xv.shape[1] != channels) throw ShapeError("attention: input shape");
    const int B = xv.shape[0], C = channels;
    const int S = xv.shape[2] * xv.shape[3] * xv.shape[4];
    const int dh = C / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> outs;
    outs.reserve(B);
    for (int b = 0; b < B; ++b) {
        Var xs = ad::reshape(ad::slice_batch(x, b), {C, S});
        Var seq = ad::transpose2d(xs);  // [S, C]
        Var qkv_out = qkv.forward(seq); // [S, 3C]
        std::vector<Var> head_outs;
        head_outs.reserve(heads);
        for (int h = 0; h < heads; ++h) {
            Var q = ad::slice_cols(qkv_out, h * dh, (h + 1) * dh);
            Var k = ad::slice_cols(qkv_out, C + h * dh, C + (h + 1) * dh);
            Var v = ad::slice_cols(qkv_out, 2 * C + h * dh, 2 * C + (h + 1) * dh);
            Var logits = ad::scale(ad::matmul(q, ad::transpose2d(k)), inv_sqrt);
            Var attn = ad::softmax_rows(logits);  // [S, S]
            if (capture) capture->push_back(attn.val());
            head_outs.push_back(ad::matmul(attn, v));  // [S, dh]
        }
        Var merged = heads == 1 ? head_outs[0] : ad::concat_cols(head_outs);
        Var projected = proj.forward(merged);                      // [S, C]
        Var back = ad::reshape(ad::transpose2d(projected),
                               {C, xv.shape[2], xv.shape[3], xv.shape[4]});
        outs.push_back(back);
    }
    Var stacked = ad::join_batch(outs);
    return ad::add(x, stacked);  // residual
}

ResBlock3d ResBlock3d::create(ParamStore& ps, const std::string& name, int cin, int cout,
                              int stride, int time_dim, Rng& rng) {
    ResBlock3d r;
    r.n1 = GroupNormLayer::create(ps, name + ".n1", cin);
    r.c1 = Conv3dLayer::create(ps, name + ".c1", cin, cout, 3, stride, 1, rng);
    r.n2 = GroupNormLayer::create(ps, name + ".n2", cout);
    r.c2 = Conv3dLayer::create(ps, name + ".c2", cout, cout, 3, 1, 1, rng);
    r.has_skip = (cin != cout) || (stride != 1);
    if (r.has_skip)
        r.skip = Conv3dLayer::create(ps, name + ".skip", cin, cout, 1, stride, 0, rng);
    r.has_time = time_dim > 0;
    if (r.has_time) r.time_proj = Linear::create(ps, name + ".temb", time_dim, cout, rng);
    return r;
}

Var ResBlock3d::forward(const Var& x, const Var& temb) const {
    Var h = c1.forward(ad::silu(n1.forward(x)));
    Var u = n2.forward(h);
    // time bias enters after the norm so normalization cannot cancel it
    if (has_time) {
        if (!temb.defined()) throw StateError("resblock: missing time embedding");
        u = ad::add_channel_bias(u, time_proj.forward(ad::silu(temb)));
    }
    h = c2.forward(ad::silu(u));
    Var res = has_skip ? skip.forward(x) : x;
    return ad::add(h, res);
}

Tensor sinusoidal_time_embedding(int t, int width) {
    if (width % 2) throw ShapeError("time embedding width must be even");
    Tensor e({width});
    const int half = width / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     static_cast<double>(half));
        e[2 * i] = std::sin(t * freq);
        e[2 * i + 1] = std::cos(t * freq);
    }
    return e;
}

}  // namespace tgseg::nn
