#ifndef COT_TENSOR_HPP
#define COT_TENSOR_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "cot/common.hpp"

namespace cot {

// Dense row-major tensor of doubles. Shapes are small at desk scale, so this
// stays deliberately simple: no views, no strides.
struct tensor {
    std::vector<size_t> shape;
    std::vector<double> data;

    tensor() = default;

    static tensor zeros(std::vector<size_t> shape);

    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }

    // 2-d access for weight matrices (rows × cols)
    size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    double& at(size_t r, size_t c) { return data[r * cols() + c]; }
    double at(size_t r, size_t c) const { return data[r * cols() + c]; }
};

// H×W×C feature grid, row-major with channel fastest.
struct feature_grid {
    int h = 0, w = 0, c = 0;
    std::vector<double> v;

    feature_grid() = default;
    feature_grid(int h_, int w_, int c_) : h(h_), w(w_), c(c_), v(static_cast<size_t>(h_) * w_ * c_, 0.0) {}

    double& at(int i, int j, int k) { return v[(static_cast<size_t>(i) * w + j) * c + k]; }
    double at(int i, int j, int k) const { return v[(static_cast<size_t>(i) * w + j) * c + k]; }

    size_t size() const { return v.size(); }
    bool same_shape(const feature_grid& o) const { return h == o.h && w == o.w && c == o.c; }
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// y = W x + b   (b optional)
void affine(const tensor& w, std::span<const double> x, const tensor* b, std::span<double> y);

// dx += Wᵀ dy
void affine_backward_input(const tensor& w, std::span<const double> dy, std::span<double> dx);

// dW += dy xᵀ,  db += dy
void affine_backward_params(tensor& dw, tensor* db, std::span<const double> dy,
                            std::span<const double> x);

} // namespace cot

#endif
