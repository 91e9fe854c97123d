#include <cmath>
#include <cstring>

#include "tgseg/autodiff.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

// 3-D convolution family. Convs lower to im2col + GEMM; transposed convs use
// the adjoint scatter of the same column layout. im2col buffers are rebuilt
// in backward instead of being captured, which keeps graph memory at the
// activations themselves.

namespace tgseg::ad {

namespace {

struct ConvDims {
    int B, Cin, D, H, W;
    int Cout, kd, kh, kw;
    int s, p;
    int Do, Ho, Wo;
    std::int64_t sin() const { return static_cast<std::int64_t>(D) * H * W; }
    std::int64_t sout() const { return static_cast<std::int64_t>(Do) * Ho * Wo; }
    int ksize() const { return kd * kh * kw; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad, bool transposed) {
    if (x.ndim() != 5 || w.ndim() != 5) throw ShapeError("conv3d: need 5-D input and weight");
    ConvDims d{};
    d.B = x.shape[0];
    d.Cin = x.shape[1];
    d.D = x.shape[2];
    d.H = x.shape[3];
    d.W = x.shape[4];
    d.s = stride;
    d.p = pad;
    d.kd = w.shape[2];
    d.kh = w.shape[3];
    d.kw = w.shape[4];
    if (!transposed) {
        d.Cout = w.shape[0];
        if (w.shape[1] != d.Cin)
            throw ShapeError("conv3d: weight " + shape_str(w.shape) + " vs input " +
                             shape_str(x.shape));
        d.Do = (d.D + 2 * pad - d.kd) / stride + 1;
        d.Ho = (d.H + 2 * pad - d.kh) / stride + 1;
        d.Wo = (d.W + 2 * pad - d.kw) / stride + 1;
        if (d.Do < 1 || d.Ho < 1 || d.Wo < 1) throw ShapeError("conv3d: kernel exceeds input");
    } else {
        d.Cout = w.shape[1];
        if (w.shape[0] != d.Cin)
            throw ShapeError("conv_transpose3d: weight " + shape_str(w.shape) + " vs input " +
                             shape_str(x.shape));
        d.Do = (d.D - 1) * stride + d.kd - 2 * pad;
        d.Ho = (d.H - 1) * stride + d.kh - 2 * pad;
        d.Wo = (d.W - 1) * stride + d.kw - 2 * pad;
        if (d.Do < 1 || d.Ho < 1 || d.Wo < 1) throw ShapeError("conv_transpose3d: empty output");
    }
    return d;
}

// col[row, (ci,kd,kh,kw)] for row = output voxel index; zero outside.
void im2col(const double* x, const ConvDims& d, Tensor& col) {
    const std::int64_t K = static_cast<std::int64_t>(d.Cin) * d.ksize();
#pragma omp parallel for schedule(static)
    for (int od = 0; od < d.Do; ++od) {
        for (int oh = 0; oh < d.Ho; ++oh)
            for (int ow = 0; ow < d.Wo; ++ow) {
                const std::int64_t row = (static_cast<std::int64_t>(od) * d.Ho + oh) * d.Wo + ow;
                double* out = &col.data[row * K];
                std::int64_t c = 0;
                for (int ci = 0; ci < d.Cin; ++ci) {
                    const double* xc = x + static_cast<std::int64_t>(ci) * d.sin();
                    for (int zd = 0; zd < d.kd; ++zd) {
                        const int id = od * d.s + zd - d.p;
                        for (int zh = 0; zh < d.kh; ++zh) {
                            const int ih = oh * d.s + zh - d.p;
                            const bool plane_ok =
                                id >= 0 && id < d.D && ih >= 0 && ih < d.H;
                            for (int zw = 0; zw < d.kw; ++zw, ++c) {
                                const int iw = ow * d.s + zw - d.p;
                                out[c] = (plane_ok && iw >= 0 && iw < d.W)
                                             ? xc[(static_cast<std::int64_t>(id) * d.H + ih) *
                                                      d.W +
                                                  iw]
                                             : 0.0;
                            }
                        }
                    }
                }
            }
    }
}

// adjoint of im2col: accumulate column gradients back into dx
void col2im_acc(const Tensor& col, const ConvDims& d, double* dx) {
    for (int od = 0; od < d.Do; ++od)
        for (int oh = 0; oh < d.Ho; ++oh)
            for (int ow = 0; ow < d.Wo; ++ow) {
                const std::int64_t row = (static_cast<std::int64_t>(od) * d.Ho + oh) * d.Wo + ow;
                const double* src = &col.data[row * d.Cin * d.ksize()];
                std::int64_t c = 0;
                for (int ci = 0; ci < d.Cin; ++ci) {
                    double* xc = dx + static_cast<std::int64_t>(ci) * d.sin();
                    for (int zd = 0; zd < d.kd; ++zd) {
                        const int id = od * d.s + zd - d.p;
                        for (int zh = 0; zh < d.kh; ++zh) {
                            const int ih = oh * d.s + zh - d.p;
                            const bool plane_ok = id >= 0 && id < d.D && ih >= 0 && ih < d.H;
                            for (int zw = 0; zw < d.kw; ++zw, ++c) {
                                const int iw = ow * d.s + zw - d.p;
                                if (plane_ok && iw >= 0 && iw < d.W)
                                    xc[(static_cast<std::int64_t>(id) * d.H + ih) * d.W + iw] +=
                                        src[c];
                            }
                        }
                    }
                }
            }
}

}  // namespace

using detail::make_op;

Var conv3d(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
    const ConvDims d = conv_dims(x.val(), w.val(), stride, pad, false);
    if (bias.val().ndim() != 1 || bias.val().shape[0] != d.Cout)
        throw ShapeError("conv3d: bias shape");
    const std::int64_t K = static_cast<std::int64_t>(d.Cin) * d.ksize();
    const Tensor w_mat = w.val().reshaped({d.Cout, static_cast<int>(K)});
    Tensor out({d.B, d.Cout, d.Do, d.Ho, d.Wo});
    Tensor col({static_cast<int>(d.sout()), static_cast<int>(K)});
    for (int b = 0; b < d.B; ++b) {
        im2col(&x.val().data[b * d.Cin * d.sin()], d, col);
        Tensor o = matmul_nt(w_mat, col);  // [Cout, Sout]
        double* dst = &out.data[static_cast<std::int64_t>(b) * d.Cout * d.sout()];
        std::memcpy(dst, o.data.data(), sizeof(double) * o.data.size());
        for (int co = 0; co < d.Cout; ++co) {
            const double bv = bias.val()[co];
            double* p = dst + static_cast<std::int64_t>(co) * d.sout();
            for (std::int64_t i = 0; i < d.sout(); ++i) p[i] += bv;
        }
    }
    return make_op(std::move(out), {x, w, bias}, [d, K](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        const Tensor w_mat = n.parents[1]->value.reshaped({d.Cout, static_cast<int>(K)});
        Tensor col({static_cast<int>(d.sout()), static_cast<int>(K)});
        for (int b = 0; b < d.B; ++b) {
            const Tensor dout_mat(
                {d.Cout, static_cast<int>(d.sout())},
                std::vector<double>(
                    n.grad.data.begin() + b * d.Cout * d.sout(),
                    n.grad.data.begin() + (b + 1) * d.Cout * d.sout()));
            if (n.parents[1]->requires_grad || n.parents[0]->requires_grad)
                im2col(&xv.data[b * d.Cin * d.sin()], d, col);
            if (n.parents[1]->requires_grad) {
                Tensor dw = matmul(dout_mat, col);  // [Cout, K]
                n.parents[1]->ensure_grad();
                Tensor& g = n.parents[1]->grad;
                for (std::int64_t i = 0; i < dw.numel(); ++i) g[i] += dw[i];
            }
            if (n.parents[2]->requires_grad) {
                n.parents[2]->ensure_grad();
                Tensor& g = n.parents[2]->grad;
                for (int co = 0; co < d.Cout; ++co) {
                    const double* p = &dout_mat.data[static_cast<std::int64_t>(co) * d.sout()];
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < d.sout(); ++i) acc += p[i];
                    g[co] += acc;
                }
            }
            if (n.parents[0]->requires_grad) {
                Tensor dcol_t = matmul_tn(w_mat, dout_mat);  // [K, Sout]
                // transpose into [Sout, K] column layout for col2im
                Tensor dcol({static_cast<int>(d.sout()), static_cast<int>(K)});
#pragma omp parallel for schedule(static)
                for (std::int64_t r = 0; r < d.sout(); ++r)
                    for (std::int64_t k = 0; k < K; ++k)
                        dcol.data[r * K + k] = dcol_t.data[k * d.sout() + r];
                n.parents[0]->ensure_grad();
                col2im_acc(dcol, d, &n.parents[0]->grad.data[b * d.Cin * d.sin()]);
            }
        }
    });
}

Var conv_transpose3d(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
    const ConvDims d = conv_dims(x.val(), w.val(), stride, pad, true);
    if (bias.val().ndim() != 1 || bias.val().shape[0] != d.Cout)
        throw ShapeError("conv_transpose3d: bias shape");
    const std::int64_t K = static_cast<std::int64_t>(d.Cout) * d.ksize();
    const Tensor w_mat = w.val().reshaped({d.Cin, static_cast<int>(K)});
    Tensor out({d.B, d.Cout, d.Do, d.Ho, d.Wo});
    for (int b = 0; b < d.B; ++b) {
        const Tensor x_mat(
            {d.Cin, static_cast<int>(d.sin())},
            std::vector<double>(x.val().data.begin() + b * d.Cin * d.sin(),
                                x.val().data.begin() + (b + 1) * d.Cin * d.sin()));
        Tensor m = matmul_tn(x_mat, w_mat);  // [Sin, Cout*k^3]
        double* dst = &out.data[static_cast<std::int64_t>(b) * d.Cout * d.sout()];
        for (int co = 0; co < d.Cout; ++co) {
            const double bv = bias.val()[co];
            double* p = dst + static_cast<std::int64_t>(co) * d.sout();
            for (std::int64_t i = 0; i < d.sout(); ++i) p[i] = bv;
        }
        // scatter each input voxel's contribution into the upsampled grid
        for (int id = 0; id < d.D; ++id)
            for (int ih = 0; ih < d.H; ++ih)
                for (int iw = 0; iw < d.W; ++iw) {
                    const std::int64_t row = (static_cast<std::int64_t>(id) * d.H + ih) * d.W + iw;
                    const double* src = &m.data[row * K];
                    std::int64_t c = 0;
                    for (int co = 0; co < d.Cout; ++co) {
                        double* oc = dst + static_cast<std::int64_t>(co) * d.sout();
                        for (int zd = 0; zd < d.kd; ++zd) {
                            const int od = id * d.s + zd - d.p;
                            for (int zh = 0; zh < d.kh; ++zh) {
                                const int oh = ih * d.s + zh - d.p;
                                const bool ok = od >= 0 && od < d.Do && oh >= 0 && oh < d.Ho;
                                for (int zw = 0; zw < d.kw; ++zw, ++c) {
                                    const int ow = iw * d.s + zw - d.p;
                                    if (ok && ow >= 0 && ow < d.Wo)
                                        oc[(static_cast<std::int64_t>(od) * d.Ho + oh) * d.Wo +
                                           ow] += src[c];
                                }
                            }
                        }
                    }
                }
    }
    return make_op(std::move(out), {x, w, bias}, [d, K](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        const Tensor w_mat = n.parents[1]->value.reshaped({d.Cin, static_cast<int>(K)});
        for (int b = 0; b < d.B; ++b) {
            const double* dout = &n.grad.data[static_cast<std::int64_t>(b) * d.Cout * d.sout()];
            // dM[i,(co,k)] = dOut[co, i*s+k-p]: gather, parallel over depth
            Tensor dm({static_cast<int>(d.sin()), static_cast<int>(K)});
#pragma omp parallel for schedule(static)
            for (int id = 0; id < d.D; ++id) {
                for (int ih = 0; ih < d.H; ++ih)
                    for (int iw = 0; iw < d.W; ++iw) {
                        const std::int64_t row =
                            (static_cast<std::int64_t>(id) * d.H + ih) * d.W + iw;
                        double* drow = &dm.data[row * K];
                        std::int64_t c = 0;
                        for (int co = 0; co < d.Cout; ++co) {
                            const double* oc = dout + static_cast<std::int64_t>(co) * d.sout();
                            for (int zd = 0; zd < d.kd; ++zd) {
                                const int od = id * d.s + zd - d.p;
                                for (int zh = 0; zh < d.kh; ++zh) {
                                    const int oh = ih * d.s + zh - d.p;
                                    const bool ok = od >= 0 && od < d.Do && oh >= 0 && oh < d.Ho;
                                    for (int zw = 0; zw < d.kw; ++zw, ++c) {
                                        const int ow = iw * d.s + zw - d.p;
                                        drow[c] =
                                            (ok && ow >= 0 && ow < d.Wo)
                                                ? oc[(static_cast<std::int64_t>(od) * d.Ho + oh) *
                                                         d.Wo +
                                                     ow]
                                                : 0.0;
                                    }
                                }
                            }
                        }
                    }
            }
            if (n.parents[0]->requires_grad) {
                Tensor dx = matmul_nt(w_mat, dm);  // [Cin, Sin]
                n.parents[0]->ensure_grad();
                double* g = &n.parents[0]->grad.data[b * d.Cin * d.sin()];
                for (std::int64_t i = 0; i < dx.numel(); ++i) g[i] += dx[i];
            }
            if (n.parents[1]->requires_grad) {
                const Tensor x_mat(
                    {d.Cin, static_cast<int>(d.sin())},
                    std::vector<double>(xv.data.begin() + b * d.Cin * d.sin(),
                                        xv.data.begin() + (b + 1) * d.Cin * d.sin()));
                Tensor dw = matmul(x_mat, dm);  // [Cin, Cout*k^3]
                n.parents[1]->ensure_grad();
                Tensor& g = n.parents[1]->grad;
                for (std::int64_t i = 0; i < dw.numel(); ++i) g[i] += dw[i];
            }
            if (n.parents[2]->requires_grad) {
                n.parents[2]->ensure_grad();
                Tensor& g = n.parents[2]->grad;
                for (int co = 0; co < d.Cout; ++co) {
                    const double* p = dout + static_cast<std::int64_t>(co) * d.sout();
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < d.sout(); ++i) acc += p[i];
                    g[co] += acc;
                }
            }
        }
    });
}

Var avg_pool3d(const Var& x, int factor) {
    const Tensor& xv = x.val();
    if (xv.ndim() != 5) throw ShapeError("avg_pool3d: need 5-D");
    const int B = xv.shape[0], C = xv.shape[1], D = xv.shape[2], H = xv.shape[3], W = xv.shape[4];
    if (D % factor || H % factor || W % factor)
        throw ShapeError("avg_pool3d: dims not divisible by " + std::to_string(factor));
    const int Do = D / factor, Ho = H / factor, Wo = W / factor;
    const double inv = 1.0 / (static_cast<double>(factor) * factor * factor);
    Tensor out({B, C, Do, Ho, Wo});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double* src =
                &xv.data[(static_cast<std::int64_t>(b) * C + c) * D * H * W];
            double* dst = &out.data[(static_cast<std::int64_t>(b) * C + c) * Do * Ho * Wo];
            for (int od = 0; od < Do; ++od)
                for (int oh = 0; oh < Ho; ++oh)
                    for (int ow = 0; ow < Wo; ++ow) {
                        double acc = 0.0;
                        for (int zd = 0; zd < factor; ++zd)
                            for (int zh = 0; zh < factor; ++zh)
                                for (int zw = 0; zw < factor; ++zw)
                                    acc += src[(static_cast<std::int64_t>(od * factor + zd) * H +
                                                oh * factor + zh) *
                                                   W +
                                               ow * factor + zw];
                        dst[(static_cast<std::int64_t>(od) * Ho + oh) * Wo + ow] = acc * inv;
                    }
        }
    return make_op(std::move(out), {x}, [B, C, D, H, W, Do, Ho, Wo, factor, inv](Node& n) {
        n.parents[0]->ensure_grad();
        Tensor& g = n.parents[0]->grad;
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                double* dst = &g.data[(static_cast<std::int64_t>(b) * C + c) * D * H * W];
                const double* src =
                    &n.grad.data[(static_cast<std::int64_t>(b) * C + c) * Do * Ho * Wo];
                for (int od = 0; od < Do; ++od)
                    for (int oh = 0; oh < Ho; ++oh)
                        for (int ow = 0; ow < Wo; ++ow) {
                            const double up =
                                src[(static_cast<std::int64_t>(od) * Ho + oh) * Wo + ow] * inv;
                            for (int zd = 0; zd < factor; ++zd)
                                for (int zh = 0; zh < factor; ++zh)
                                    for (int zw = 0; zw < factor; ++zw)
                                        dst[(static_cast<std::int64_t>(od * factor + zd) * H +
                                             oh * factor + zh) *
                                                W +
                                            ow * factor + zw] += up;
                        }
            }
    });
}

Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, double eps) {
    const Tensor& xv = x.val();
    if (xv.ndim() != 5) throw ShapeError("group_norm: need 5-D");
    const int B = xv.shape[0], C = xv.shape[1];
    const std::int64_t S = static_cast<std::int64_t>(xv.shape[2]) * xv.shape[3] * xv.shape[4];
    if (C % groups) throw ShapeError("group_norm: C % groups != 0");
    if (gamma.val().numel() != C || beta.val().numel() != C)
        throw ShapeError("group_norm: affine shape");
    const int cg = C / groups;
    const std::int64_t m = cg * S;
    Tensor out(xv.shape);
    std::vector<double> mus(static_cast<size_t>(B) * groups), sigmas(static_cast<size_t>(B) * groups);
    for (int b = 0; b < B; ++b)
        for (int g = 0; g < groups; ++g) {
            const double* src = &xv.data[(static_cast<std::int64_t>(b) * C + g * cg) * S];
            double mu = 0.0;
            for (std::int64_t i = 0; i < m; ++i) mu += src[i];
            mu /= static_cast<double>(m);
            double var = 0.0;
            for (std::int64_t i = 0; i < m; ++i) {
                const double dv = src[i] - mu;
                var += dv * dv;
            }
            var /= static_cast<double>(m);
            const double sigma = std::sqrt(var + eps);
            mus[static_cast<size_t>(b) * groups + g] = mu;
            sigmas[static_cast<size_t>(b) * groups + g] = sigma;
            double* dst = &out.data[(static_cast<std::int64_t>(b) * C + g * cg) * S];
            for (int cc = 0; cc < cg; ++cc) {
                const double ga = gamma.val()[g * cg + cc];
                const double be = beta.val()[g * cg + cc];
                for (std::int64_t i = 0; i < S; ++i)
                    dst[cc * S + i] = ga * (src[cc * S + i] - mu) / sigma + be;
            }
        }
    return make_op(
        std::move(out), {x, gamma, beta}, [B, C, S, groups, cg, m, mus, sigmas](Node& n) {
            const Tensor& xv = n.parents[0]->value;
            const Tensor& gam = n.parents[1]->value;
            for (int b = 0; b < B; ++b)
                for (int g = 0; g < groups; ++g) {
                    const double mu = mus[static_cast<size_t>(b) * groups + g];
                    const double sigma = sigmas[static_cast<size_t>(b) * groups + g];
                    const double* src = &xv.data[(static_cast<std::int64_t>(b) * C + g * cg) * S];
                    const double* go = &n.grad.data[(static_cast<std::int64_t>(b) * C + g * cg) * S];
                    // dy, plus the two group means needed for dx
                    double mean_dy = 0.0, mean_dyy = 0.0;
                    for (int cc = 0; cc < cg; ++cc) {
                        const double ga = gam[g * cg + cc];
                        for (std::int64_t i = 0; i < S; ++i) {
                            const double yh = (src[cc * S + i] - mu) / sigma;
                            const double dy = go[cc * S + i] * ga;
                            mean_dy += dy;
                            mean_dyy += dy * yh;
                        }
                    }
                    mean_dy /= static_cast<double>(m);
                    mean_dyy /= static_cast<double>(m);
                    if (n.parents[0]->requires_grad) {
                        n.parents[0]->ensure_grad();
                        double* dx =
                            &n.parents[0]->grad.data[(static_cast<std::int64_t>(b) * C + g * cg) * S];
                        for (int cc = 0; cc < cg; ++cc) {
                            const double ga = gam[g * cg + cc];
                            for (std::int64_t i = 0; i < S; ++i) {
                                const double yh = (src[cc * S + i] - mu) / sigma;
                                const double dy = go[cc * S + i] * ga;
                                dx[cc * S + i] += (dy - mean_dy - yh * mean_dyy) / sigma;
                            }
                        }
                    }
                    if (n.parents[1]->requires_grad || n.parents[2]->requires_grad) {
                        n.parents[1]->ensure_grad();
                        n.parents[2]->ensure_grad();
                        for (int cc = 0; cc < cg; ++cc) {
                            double dga = 0.0, dbe = 0.0;
                            for (std::int64_t i = 0; i < S; ++i) {
                                const double yh = (src[cc * S + i] - mu) / sigma;
                                dga += go[cc * S + i] * yh;
                                dbe += go[cc * S + i];
                            }
                            n.parents[1]->grad[g * cg + cc] += dga;
                            n.parents[2]->grad[g * cg + cc] += dbe;
                        }
                    }
                }
        });
}

Var batch_standardize(const Var& x, Tensor& running_mean, Tensor& running_var, bool training,
                      double momentum, double eps) {
    const Tensor& xv = x.val();
    if (xv.ndim() != 5) throw ShapeError("batch_standardize: need 5-D");
    const int B = xv.shape[0], C = xv.shape[1];
    const std::int64_t S = static_cast<std::int64_t>(xv.shape[2]) * xv.shape[3] * xv.shape[4];
    if (running_mean.numel() != C || running_var.numel() != C)
        throw ShapeError("batch_standardize: running stats shape");
    const std::int64_t m = static_cast<std::int64_t>(B) * S;
    Tensor out(xv.shape);
    std::vector<double> mus(C), sigmas(C);
    for (int c = 0; c < C; ++c) {
        double mu, var;
        if (training) {
            mu = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* src = &xv.data[(static_cast<std::int64_t>(b) * C + c) * S];
                for (std::int64_t i = 0; i < S; ++i) mu += src[i];
            }
            mu /= static_cast<double>(m);
            var = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* src = &xv.data[(static_cast<std::int64_t>(b) * C + c) * S];
                for (std::int64_t i = 0; i < S; ++i) {
                    const double dv = src[i] - mu;
                    var += dv * dv;
                }
            }
            var /= static_cast<double>(m);
            running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mu;
            running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var;
        } else {
            mu = running_mean[c];
            var = running_var[c];
        }
        const double sigma = std::sqrt(var + eps);
        mus[c] = mu;
        sigmas[c] = sigma;
        for (int b = 0; b < B; ++b) {
            const double* src = &xv.data[(static_cast<std::int64_t>(b) * C + c) * S];
            double* dst = &out.data[(static_cast<std::int64_t>(b) * C + c) * S];
            for (std::int64_t i = 0; i < S; ++i) dst[i] = (src[i] - mu) / sigma;
        }
    }
    return make_op(std::move(out), {x}, [B, C, S, m, mus, sigmas, training](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        n.parents[0]->ensure_grad();
        const Tensor& xv = n.parents[0]->value;
        for (int c = 0; c < C; ++c) {
            const double mu = mus[c], sigma = sigmas[c];
            if (training) {
                double mean_dy = 0.0, mean_dyy = 0.0;
                for (int b = 0; b < B; ++b) {
                    const double* src = &xv.data[(static_cast<std::int64_t>(b) * C + c) * S];
                    const double* go = &n.grad.data[(static_cast<std::int64_t>(b) * C + c) * S];
                    for (std::int64_t i = 0; i < S; ++i) {
                        mean_dy += go[i];
                        mean_dyy += go[i] * (src[i] - mu) / sigma;
                    }
                }
                mean_dy /= static_cast<double>(m);
                mean_dyy /= static_cast<double>(m);
                for (int b = 0; b < B; ++b) {
                    const double* src = &xv.data[(static_cast<std::int64_t>(b) * C + c) * S];
                    const double* go = &n.grad.data[(static_cast<std::int64_t>(b) * C + c) * S];
                    double* dx = &n.parents[0]->grad.data[(static_cast<std::int64_t>(b) * C + c) * S];
                    for (std::int64_t i = 0; i < S; ++i) {
                        const double yh = (src[i] - mu) / sigma;
                        dx[i] += (go[i] - mean_dy - yh * mean_dyy) / sigma;
                    }
                }
            } else {
                for (int b = 0; b < B; ++b) {
                    const double* go = &n.grad.data[(static_cast<std::int64_t>(b) * C + c) * S];
                    double* dx = &n.parents[0]->grad.data[(static_cast<std::int64_t>(b) * C + c) * S];
                    for (std::int64_t i = 0; i < S; ++i) dx[i] += go[i] / sigma;
                }
            }
        }
    });
}

}  // namespace tgseg::ad
