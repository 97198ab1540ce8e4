#include "cot/tensor.hpp"

#include <numeric>
#include <cmath>

namespace cot {

tensor tensor::zeros(std::vector<size_t> shape) {
    tensor t;
    size_t n = 1;
    for (size_t d : shape) n *= d;
    t.shape = std::move(shape);
    t.data.assign(n, 0.0);
    return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw shape_error("dot: size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
}

void affine(const tensor& w, std::span<const double> x, const tensor* b, std::span<double> y) {
    const size_t r = w.rows(), c = w.cols();
    if (x.size() != c || y.size() != r) throw shape_error("affine: shape mismatch");
    for (size_t i = 0; i < r; ++i) {
        double s = b ? b->data[i] : 0.0;
        const double* wr = w.data.data() + i * c;
        for (size_t j = 0; j < c; ++j) s += wr[j] * x[j];
        y[i] = s;
    }
}

void affine_backward_input(const tensor& w, std::span<const double> dy, std::span<double> dx) {
    const size_t r = w.rows(), c = w.cols();
    if (dy.size() != r || dx.size() != c) throw shape_error("affine_backward_input: shape mismatch");
    for (size_t i = 0; i < r; ++i) {
        const double g = dy[i];
        const double* wr = w.data.data() + i * c;
        for (size_t j = 0; j < c; ++j) dx[j] += g * wr[j];
    }
}

void affine_backward_params(tensor& dw, tensor* db, std::span<const double> dy,
                            std::span<const double> x) {
    const size_t r = dw.rows(), c = dw.cols();
    if (dy.size() != r || x.size() != c) throw shape_error("affine_backward_params: shape mismatch");
    for (size_t i = 0; i < r; ++i) {
        const double g = dy[i];
        double* wr = dw.data.data() + i * c;
        for (size_t j = 0; j < c; ++j) wr[j] += g * x[j];
        if (db) db->data[i] += g;
    }
}

} // namespace cot
