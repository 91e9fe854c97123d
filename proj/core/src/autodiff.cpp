#include "tgseg/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace tgseg::ad {

namespace debug {
bool check_numerics = false;
}

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_next_id{1};

NodePtr new_node(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return n;
}

Tensor& pgrad(Node& n, size_t i) {
    n.parents[i]->ensure_grad();
    return n.parents[i]->grad;
}

}  // namespace

namespace detail {
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bwd) {
    auto n = new_node(std::move(value));
    if (g_grad_enabled) {
        bool needs = false;
        for (const auto& p : parents) needs = needs || p.requires_grad();
        if (needs) {
            n->requires_grad = true;
            n->parents.reserve(parents.size());
            for (auto& p : parents) n->parents.push_back(p.node());
            n->backward_fn = std::move(bwd);
        }
    }
    return Var(n);
}
}  // namespace detail

namespace {
using detail::make_op;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var constant(Tensor v) { return Var(new_node(std::move(v))); }

Var make_param(Tensor v) {
    auto n = new_node(std::move(v));
    n->requires_grad = true;
    n->is_param = true;
    return Var(n);
}

void backward(const Var& root) {
    if (!root.defined()) throw StateError("backward: undefined root");
    if (root.val().numel() != 1) throw ShapeError("backward: root must be scalar");
    if (!root.node()->requires_grad) return;

    // Parents always precede children in id order, so sorting the reachable
    // set by descending id is a valid reverse topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.node().get()};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });

    root.node()->ensure_grad();
    root.node()->grad.data[0] += 1.0;
    for (Node* n : order) {
        if (n->backward_fn && n->grad_live()) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    require_same_shape(a.val(), b.val(), "add");
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b.val()[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        for (size_t p = 0; p < 2; ++p) {
            Tensor& g = pgrad(n, p);
            if (!n.parents[p]->requires_grad) continue;
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.val(), b.val(), "sub");
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b.val()[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor& g = pgrad(n, 0);
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = pgrad(n, 1);
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) g[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.val(), b.val(), "mul");
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b.val()[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            Tensor& g = pgrad(n, 0);
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad[i] * bv[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = pgrad(n, 1);
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad[i] * av[i];
        }
    });
}

Var div(const Var& a, const Var& b) {
    require_same_shape(a.val(), b.val(), "div");
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] /= b.val()[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            Tensor& g = pgrad(n, 0);
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad[i] / bv[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = pgrad(n, 1);
            for (std::int64_t i = 0; i < n.grad.numel(); ++i)
                g[i] -= n.grad[i] * av[i] / (bv[i] * bv[i]);
        }
    });
}

Var scale(const Var& a, double c) {
    Tensor out = a.val();
    for (auto& v : out.data) v *= c;
    return make_op(std::move(out), {a}, [c](Node& n) {
        Tensor& g = pgrad(n, 0);
        for (std::int64_t i = 0; i < n.grad.numel(); ++i) g[i] += c * n.grad[i];
    });
}

Var add_scalar(const Var& a, double c) {
    Tensor out = a.val();
    for (auto& v : out.data) v += c;
    return make_op(std::move(out), {a}, [](Node& n) {
        Tensor& g = pgrad(n, 0);
        for (std::int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad[i];
    });
}

Var silu(const Var& a) {
    Tensor out = a.val();
    for (auto& v : out.data) v = v / (1.0 + std::exp(-v));
    return make_op(std::move(out), {a}, [](Node& n) {
        const Tensor& x = n.parents[0]->value;
        Tensor& g = pgrad(n, 0);
        for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-x[i]));
            g[i] += n.grad[i] * s * (1.0 + x[i] * (1.0 - s));
        }
    });
}

// --------------------------------------------------------------------- shape

Var reshape(const Var& a, Shape s) {
    Tensor out = a.val().reshaped(std::move(s));
    return make_op(std::move(out), {a}, [](Node& n) {
        Tensor& g = pgrad(n, 0);
        for (std::int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad[i];
    });
}

Var transpose2d(const Var& a) {
    const Tensor& x = a.val();
    if (x.ndim() != 2) throw ShapeError("transpose2d: need 2-D");
    const int r = x.shape[0], c = x.shape[1];
    Tensor out({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(j, i) = x.at(i, j);
    return make_op(std::move(out), {a}, [r, c](Node& n) {
        Tensor& g = pgrad(n, 0);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) g.data[static_cast<size_t>(i) * c + j] += n.grad.at(j, i);
    });
}

Var slice_cols(const Var& a, int c0, int c1) {
    const Tensor& x = a.val();
    if (x.ndim() != 2 || c0 < 0 || c1 > x.shape[1] || c0 >= c1)
        throw ShapeError("slice_cols: bad range");
    const int r = x.shape[0], c = x.shape[1], w = c1 - c0;
    Tensor out({r, w});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j) out.at(i, j) = x.at(i, c0 + j);
    return make_op(std::move(out), {a}, [r, c, c0, w](Node& n) {
        Tensor& g = pgrad(n, 0);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j)
                g.data[static_cast<size_t>(i) * c + c0 + j] += n.grad.at(i, j);
    });
}

Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: empty");
    const int r = xs[0].val().shape[0];
    int total = 0;
    for (const auto& v : xs) {
        if (v.val().ndim() != 2 || v.val().shape[0] != r) throw ShapeError("concat_cols: rows");
        total += v.val().shape[1];
    }
    Tensor out({r, total});
    int off = 0;
    for (const auto& v : xs) {
        const int w = v.val().shape[1];
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j) out.at(i, off + j) = v.val().at(i, j);
        off += w;
    }
    std::vector<int> widths;
    for (const auto& v : xs) widths.push_back(v.val().shape[1]);
    return make_op(std::move(out), xs, [r, widths](Node& n) {
        int off = 0;
        for (size_t p = 0; p < widths.size(); ++p) {
            const int w = widths[p];
            if (n.parents[p]->requires_grad) {
                Tensor& g = pgrad(n, p);
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < w; ++j)
                        g.data[static_cast<size_t>(i) * w + j] += n.grad.at(i, off + j);
            }
            off += w;
        }
    });
}

namespace {
// views a rank>=2 tensor as [axis0, axis1, rest]
void axis1_dims(const Tensor& t, std::int64_t& n0, int& n1, std::int64_t& rest) {
    n0 = t.shape[0];
    n1 = t.shape[1];
    rest = 1;
    for (size_t i = 2; i < t.shape.size(); ++i) rest *= t.shape[i];
}
}  // namespace

Var slice_axis1(const Var& a, int c0, int c1) {
    const Tensor& x = a.val();
    if (x.ndim() < 2 || c0 < 0 || c1 > x.shape[1] || c0 >= c1)
        throw ShapeError("slice_axis1: bad range");
    std::int64_t n0, rest;
    int n1;
    axis1_dims(x, n0, n1, rest);
    Shape os = x.shape;
    os[1] = c1 - c0;
    Tensor out(os);
    const int w = c1 - c0;
    for (std::int64_t i = 0; i < n0; ++i)
        for (int j = 0; j < w; ++j)
            std::copy_n(&x.data[(i * n1 + c0 + j) * rest], rest, &out.data[(i * w + j) * rest]);
    return make_op(std::move(out), {a}, [n0, n1, rest, c0, w](Node& n) {
        Tensor& g = pgrad(n, 0);
        for (std::int64_t i = 0; i < n0; ++i)
            for (int j = 0; j < w; ++j) {
                const double* src = &n.grad.data[(i * w + j) * rest];
                double* dst = &g.data[(i * n1 + c0 + j) * rest];
                for (std::int64_t k = 0; k < rest; ++k) dst[k] += src[k];
            }
    });
}

Var concat_axis1(const Var& a, const Var& b) {
    const Tensor& x = a.val();
    const Tensor& y = b.val();
    if (x.ndim() != y.ndim() || x.ndim() < 2) throw ShapeError("concat_axis1: rank");
    for (int i = 0; i < x.ndim(); ++i)
        if (i != 1 && x.shape[i] != y.shape[i])
            throw ShapeError("concat_axis1: " + shape_str(x.shape) + " vs " + shape_str(y.shape));
    std::int64_t n0, rest;
    int ca, cb;
    axis1_dims(x, n0, ca, rest);
    cb = y.shape[1];
    Shape os = x.shape;
    os[1] = ca + cb;
    Tensor out(os);
    for (std::int64_t i = 0; i < n0; ++i) {
        std::copy_n(&x.data[i * ca * rest], ca * rest, &out.data[i * (ca + cb) * rest]);
        std::copy_n(&y.data[i * cb * rest], cb * rest, &out.data[(i * (ca + cb) + ca) * rest]);
    }
    return make_op(std::move(out), {a, b}, [n0, ca, cb, rest](Node& n) {
        for (std::int64_t i = 0; i < n0; ++i) {
            if (n.parents[0]->requires_grad) {
                Tensor& g = pgrad(n, 0);
                const double* src = &n.grad.data[i * (ca + cb) * rest];
                double* dst = &g.data[i * ca * rest];
                for (std::int64_t k = 0; k < ca * rest; ++k) dst[k] += src[k];
            }
            if (n.parents[1]->requires_grad) {
                Tensor& g = pgrad(n, 1);
                const double* src = &n.grad.data[(i * (ca + cb) + ca) * rest];
                double* dst = &g.data[i * cb * rest];
                for (std::int64_t k = 0; k < cb * rest; ++k) dst[k] += src[k];
            }
        }
    });
}

Var slice_batch(const Var& a, int b) {
    const Tensor& x = a.val();
    if (x.ndim() < 1 || b < 0 || b >= x.shape[0]) throw ShapeError("slice_batch: index");
    Shape os(x.shape.begin() + 1, x.shape.end());
    const std::int64_t chunk = shape_numel(os);
    Tensor out(os);
    std::copy_n(&x.data[b * chunk], chunk, out.data.data());
    return make_op(std::move(out), {a}, [b, chunk](Node& n) {
        Tensor& g = pgrad(n, 0);
        const double* src = n.grad.data.data();
        double* dst = &g.data[b * chunk];
        for (std::int64_t k = 0; k < chunk; ++k) dst[k] += src[k];
    });
}

Var join_batch(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("join_batch: empty");
    const Shape inner = xs[0].val().shape;
    const std::int64_t chunk = shape_numel(inner);
    for (const auto& v : xs) require_same_shape(v.val(), xs[0].val(), "join_batch");
    Shape os;
    os.push_back(static_cast<int>(xs.size()));
    os.insert(os.end(), inner.begin(), inner.end());
    Tensor out(os);
    for (size_t i = 0; i < xs.size(); ++i)
        std::copy_n(xs[i].val().data.data(), chunk, &out.data[i * chunk]);
    return make_op(std::move(out), xs, [chunk](Node& n) {
        for (size_t p = 0; p < n.parents.size(); ++p) {
            if (!n.parents[p]->requires_grad) continue;
            Tensor& g = pgrad(n, p);
            const double* src = &n.grad.data[p * chunk];
            for (std::int64_t k = 0; k < chunk; ++k) g.data[k] += src[k];
        }
    });
}

// ---------------------------------------------------------------- reductions

Var sum_all(const Var& a) {
    Tensor out = Tensor::scalar(a.val().sum());
    return make_op(std::move(out), {a}, [](Node& n) {
        Tensor& g = pgrad(n, 0);
        const double up = n.grad.data[0];
        for (auto& v : g.data) v += up;
    });
}

Var mean_all(const Var& a) {
    const double inv = 1.0 / static_cast<double>(a.val().numel());
    Tensor out = Tensor::scalar(a.val().sum() * inv);
    return make_op(std::move(out), {a}, [inv](Node& n) {
        Tensor& g = pgrad(n, 0);
        const double up = n.grad.data[0] * inv;
        for (auto& v : g.data) v += up;
    });
}

// ------------------------------------------------------------ linear algebra

Var matmul(const Var& a, const Var& b) {
    Tensor out = tgseg::matmul(a.val(), b.val());
    return make_op(std::move(out), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            Tensor da = matmul_nt(n.grad, bv);  // dOut x B^T
            Tensor& g = pgrad(n, 0);
            for (std::int64_t i = 0; i < da.numel(); ++i) g[i] += da[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor db = matmul_tn(av, n.grad);  // A^T x dOut
            Tensor& g = pgrad(n, 1);
            for (std::int64_t i = 0; i < db.numel(); ++i) g[i] += db[i];
        }
    });
}

Var add_row_bias(const Var& x, const Var& b) {
    const Tensor& xv = x.val();
    const Tensor& bv = b.val();
    if (xv.ndim() != 2 || bv.ndim() != 1 || bv.shape[0] != xv.shape[1])
        throw ShapeError("add_row_bias: " + shape_str(xv.shape) + " + " + shape_str(bv.shape));
    Tensor out = xv;
    const int r = xv.shape[0], c = xv.shape[1];
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(i, j) += bv[j];
    return make_op(std::move(out), {x, b}, [r, c](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor& g = pgrad(n, 0);
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = pgrad(n, 1);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) g[j] += n.grad.at(i, j);
        }
    });
}

Var add_channel_bias(const Var& x, const Var& v) {
    const Tensor& xv = x.val();
    const Tensor& vv = v.val();
    if (xv.ndim() != 5 || vv.ndim() != 2 || vv.shape[0] != xv.shape[0] ||
        vv.shape[1] != xv.shape[1])
        throw ShapeError("add_channel_bias: " + shape_str(xv.shape) + " + " + shape_str(vv.shape));
    const int B = xv.shape[0], C = xv.shape[1];
    const std::int64_t S = static_cast<std::int64_t>(xv.shape[2]) * xv.shape[3] * xv.shape[4];
    Tensor out = xv;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            double* p = &out.data[(static_cast<std::int64_t>(b) * C + c) * S];
            const double add = vv.at(b, c);
            for (std::int64_t i = 0; i < S; ++i) p[i] += add;
        }
    return make_op(std::move(out), {x, v}, [B, C, S](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor& g = pgrad(n, 0);
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = pgrad(n, 1);
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    const double* p = &n.grad.data[(static_cast<std::int64_t>(b) * C + c) * S];
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < S; ++i) acc += p[i];
                    g.at(b, c) += acc;
                }
        }
    });
}

Var softmax_rows(const Var& x) {
    const Tensor& xv = x.val();
    if (xv.ndim() != 2) throw ShapeError("softmax_rows: need 2-D");
    const int r = xv.shape[0], c = xv.shape[1];
    Tensor out({r, c});
    for (int i = 0; i < r; ++i) {
        double mx = xv.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, xv.at(i, j));
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            const double e = std::exp(xv.at(i, j) - mx);
            out.at(i, j) = e;
            z += e;
        }
        for (int j = 0; j < c; ++j) out.at(i, j) /= z;
    }
    return make_op(std::move(out), {x}, [r, c](Node& n) {
        Tensor& g = pgrad(n, 0);
        for (int i = 0; i < r; ++i) {
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += n.grad.at(i, j) * n.value.at(i, j);
            for (int j = 0; j < c; ++j)
                g.data[static_cast<size_t>(i) * c + j] +=
                    n.value.at(i, j) * (n.grad.at(i, j) - dot);
        }
    });
}

Var embedding(const Var& table, const std::vector<int>& ids) {
    const Tensor& tv = table.val();
    if (tv.ndim() != 2) throw ShapeError("embedding: table must be 2-D");
    const int V = tv.shape[0], E = tv.shape[1];
    Tensor out({static_cast<int>(ids.size()), E});
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= V) throw ValidationError("embedding: id out of range");
        std::copy_n(&tv.data[static_cast<size_t>(ids[i]) * E], E, &out.data[i * E]);
    }
    return make_op(std::move(out), {table}, [ids, E](Node& n) {
        Tensor& g = pgrad(n, 0);
        for (size_t i = 0; i < ids.size(); ++i) {
            const double* src = &n.grad.data[i * E];
            double* dst = &g.data[static_cast<size_t>(ids[i]) * E];
            for (int k = 0; k < E; ++k) dst[k] += src[k];
        }
    });
}

Var cross_entropy_mean(const Var& probs, const std::vector<int>& labels) {
    const Tensor& p = probs.val();
    if (p.ndim() != 4 && p.ndim() != 5) throw ShapeError("cross_entropy_mean: need 4/5-D probs");
    const int B = p.ndim() == 5 ? p.shape[0] : 1;
    const int N = p.ndim() == 5 ? p.shape[1] : p.shape[0];
    const std::int64_t S = p.numel() / (static_cast<std::int64_t>(B) * N);
    if (static_cast<std::int64_t>(labels.size()) != B * S)
        throw ShapeError("cross_entropy_mean: label count mismatch");
    double acc = 0.0;
    for (int b = 0; b < B; ++b)
        for (std::int64_t v = 0; v < S; ++v) {
            const int cls = labels[static_cast<size_t>(b) * S + v];
            if (cls < 0 || cls >= N) throw ValidationError("cross_entropy_mean: class id");
            const double pv = p.data[(static_cast<std::int64_t>(b) * N + cls) * S + v];
            acc -= std::log(std::max(pv, 1e-300));
        }
    const double inv = 1.0 / static_cast<double>(B * S);
    Tensor out = Tensor::scalar(acc * inv);
    return make_op(std::move(out), {probs}, [labels, B, N, S, inv](Node& n) {
        Tensor& g = pgrad(n, 0);
        const Tensor& p = n.parents[0]->value;
        const double up = n.grad.data[0] * inv;
        for (int b = 0; b < B; ++b)
            for (std::int64_t v = 0; v < S; ++v) {
                const int cls = labels[static_cast<size_t>(b) * S + v];
                const std::int64_t idx = (static_cast<std::int64_t>(b) * N + cls) * S + v;
                g.data[idx] -= up / std::max(p.data[idx], 1e-300);
            }
    });
}

void check_finite(const Tensor& t, const std::string& role) {
    if (!t.all_finite()) throw NumericError("non-finite values in " + role);
}

void check_finite(const Var& v, const std::string& role) { check_finite(v.val(), role); }

}  // namespace tgseg::ad
