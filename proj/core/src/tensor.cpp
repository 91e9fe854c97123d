#include "tgseg/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tgseg {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
        throw ShapeError("tensor init: payload size " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
}

Tensor Tensor::randn(Rng& rng, Shape s, double stddev) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = rng.normal() * stddev;
    return t;
}

Tensor Tensor::uniform(Rng& rng, Shape s, double lo, double hi) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

Tensor Tensor::reshaped(Shape s) const {
    if (shape_numel(s) != numel())
        throw ShapeError("reshape " + shape_str(shape) + " -> " + shape_str(s));
    Tensor t;
    t.shape = std::move(s);
    t.data = data;
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::min() const { return *std::min_element(data.begin(), data.end()); }
double Tensor::max() const { return *std::max_element(data.begin(), data.end()); }

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data) s += v;
    return s;
}

static void check_2d(const Tensor& t, const char* name) {
    if (t.ndim() != 2) throw ShapeError(std::string("matmul: ") + name + " must be 2-D");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_2d(a, "lhs");
    check_2d(b, "rhs");
    if (a.shape[1] != b.shape[0])
        throw ShapeError("matmul: " + shape_str(a.shape) + " x " + shape_str(b.shape));
    Tensor out({a.shape[0], b.shape[1]});
    MatMap(out.data.data(), a.shape[0], b.shape[1]) =
        ConstMatMap(a.data.data(), a.shape[0], a.shape[1]) *
        ConstMatMap(b.data.data(), b.shape[0], b.shape[1]);
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    check_2d(a, "lhs");
    check_2d(b, "rhs");
    if (a.shape[0] != b.shape[0])
        throw ShapeError("matmul_tn: " + shape_str(a.shape) + " x " + shape_str(b.shape));
    Tensor out({a.shape[1], b.shape[1]});
    MatMap(out.data.data(), a.shape[1], b.shape[1]) =
        ConstMatMap(a.data.data(), a.shape[0], a.shape[1]).transpose() *
        ConstMatMap(b.data.data(), b.shape[0], b.shape[1]);
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check_2d(a, "lhs");
    check_2d(b, "rhs");
    if (a.shape[1] != b.shape[1])
        throw ShapeError("matmul_nt: " + shape_str(a.shape) + " x " + shape_str(b.shape));
    Tensor out({a.shape[0], b.shape[0]});
    MatMap(out.data.data(), a.shape[0], b.shape[0]) =
        ConstMatMap(a.data.data(), a.shape[0], a.shape[1]) *
        ConstMatMap(b.data.data(), b.shape[0], b.shape[1]).transpose();
    return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
}

}  // namespace tgseg
