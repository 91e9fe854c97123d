#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tgseg/tensor.hpp"

namespace tgseg::ad {

// Reverse-mode autodiff over Tensor. Each op appends a Node whose backward
// closure accumulates into the parents' grads. Graphs are built per forward
// pass and freed when the root Var goes out of scope; parameters are leaf
// nodes that outlive graphs.

struct Node {
    Tensor value;
    Tensor grad;  // allocated on first touch, same shape as value
    bool requires_grad = false;
    bool is_param = false;
    std::uint64_t id = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.data.size() != value.data.size()) grad = Tensor::zeros(value.shape);
    }
    bool grad_live() const { return grad.data.size() == value.data.size(); }
};

using NodePtr = std::shared_ptr<Node>;

class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : n_(std::move(n)) {}

    bool defined() const { return static_cast<bool>(n_); }
    const Tensor& val() const { return n_->value; }
    Tensor& mutable_val() { return n_->value; }
    const Tensor& grad() const { return n_->grad; }
    NodePtr node() const { return n_; }
    bool requires_grad() const { return n_ && n_->requires_grad; }

private:
    NodePtr n_;
};

// Grad recording is on by default; NoGradGuard turns it off for the current
// thread (evaluation-mode forward passes).
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

Var constant(Tensor v);
Var make_param(Tensor v);

namespace detail {
// Registers an op node; drops the closure when grad recording is off or no
// parent needs gradients. Building block for ops defined out of line.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bwd);
}

// Runs reverse accumulation from a scalar root. Parameter grads accumulate
// across calls until zeroed by the caller.
void backward(const Var& root);

// --- elementwise ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var silu(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }

// --- shape ---
Var reshape(const Var& a, Shape s);
Var transpose2d(const Var& a);
Var slice_cols(const Var& a, int c0, int c1);
Var concat_cols(const std::vector<Var>& xs);
// slice/concat along axis 1 (channels) of rank >= 2 tensors
Var slice_axis1(const Var& a, int c0, int c1);
Var concat_axis1(const Var& a, const Var& b);
// batch axis of 5-D tensors
Var slice_batch(const Var& a, int b);           // [B,...] -> [...]
Var join_batch(const std::vector<Var>& xs);     // k x [...] -> [k,...]

// --- reductions ---
Var sum_all(const Var& a);
Var mean_all(const Var& a);

// --- linear algebra ---
Var matmul(const Var& a, const Var& b);               // [m,k]x[k,n]
Var add_row_bias(const Var& x, const Var& b);         // [R,C] + [C]
Var add_channel_bias(const Var& x, const Var& v);     // [B,C,D,H,W] + [B,C]
Var softmax_rows(const Var& x);                       // softmax over last dim of [R,L]

// --- nn primitives ---
Var conv3d(const Var& x, const Var& w, const Var& bias, int stride, int pad);
Var conv_transpose3d(const Var& x, const Var& w, const Var& bias, int stride, int pad);
Var avg_pool3d(const Var& x, int factor);
Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, double eps = 1e-5);
// Per-channel standardization over (batch, spatial); no affine part. In
// training mode batch statistics are used and running stats updated in place.
Var batch_standardize(const Var& x, Tensor& running_mean, Tensor& running_var, bool training,
                      double momentum = 0.1, double eps = 1e-5);
Var embedding(const Var& table, const std::vector<int>& ids);

// mean over voxels of -log p(target class); probs [N,D,H,W] or [B,N,D,H,W],
// labels flat target ids in z-major order (batch-major when batched).
Var cross_entropy_mean(const Var& probs, const std::vector<int>& labels);

// Throws NumericError naming `role` if any entry is non-finite.
void check_finite(const Var& v, const std::string& role);
void check_finite(const Tensor& t, const std::string& role);

namespace debug {
// When true every module forward asserts its outputs are finite.
extern bool check_numerics;
}

}  // namespace tgseg::ad
