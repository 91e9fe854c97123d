#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "tgseg/errors.hpp"
#include "tgseg/rng.hpp"

namespace tgseg {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s);

// Dense row-major double tensor (last axis fastest). All network math runs
// in double so finite-difference gradient checks are meaningful.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}
    Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_numel(shape), fill) {}
    Tensor(Shape s, std::vector<double> d);

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }
    static Tensor randn(Rng& rng, Shape s, double stddev = 1.0);
    static Tensor uniform(Rng& rng, Shape s, double lo, double hi);
    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& operator[](std::int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](std::int64_t i) const { return data[static_cast<size_t>(i)]; }

    // Multi-index accessors for the common ranks.
    double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double& at(int i, int j, int k) {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double at(int i, int j, int k) const {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double& at(int a, int b, int c, int d) {
        return data[((static_cast<size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }
    double at(int a, int b, int c, int d) const {
        return data[((static_cast<size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }
    double& at(int a, int b, int c, int d, int e) {
        return data[(((static_cast<size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d) *
                        shape[4] +
                    e];
    }
    double at(int a, int b, int c, int d, int e) const {
        return data[(((static_cast<size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d) *
                        shape[4] +
                    e];
    }

    Tensor reshaped(Shape s) const;
    bool all_finite() const;
    double min() const;
    double max() const;
    double sum() const;
};

// out = a @ b for 2-D tensors [m,k] x [k,n] -> [m,n]. Eigen-backed.
Tensor matmul(const Tensor& a, const Tensor& b);
// out = a^T @ b, [k,m] x [k,n] -> [m,n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// out = a @ b^T, [m,k] x [n,k] -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace tgseg
