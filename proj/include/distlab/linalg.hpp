#pragma once

#include <string>
#include <vector>

namespace distlab {

using Vec64 = std::vector<double>;

// Dense row-major matrix of doubles: element (i, j) lives at i * cols + j.
struct Mat64 {
    int rows = 0;
    int cols = 0;
    Vec64 data;

    Mat64() = default;
    Mat64(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
};

bool all_finite(const Vec64& v);
void ensure_finite(const Vec64& v, const std::string& what);
void ensure_finite(double v, const std::string& what);

double dot(const Vec64& a, const Vec64& b);
double sum(const Vec64& v);
double mean(const Vec64& v);

// y = W x + b (W.cols must equal x.size(), b.size() must equal W.rows).
Vec64 affine(const Mat64& w, const Vec64& b, const Vec64& x);
// Accumulates x_grad += W^T y_grad, w_grad += y_grad x^T, b_grad += y_grad.
void affine_backward(const Mat64& w, const Vec64& x, const Vec64& y_grad,
                     Mat64& w_grad, Vec64& b_grad, Vec64& x_grad);

// Temperature-scaled softmax with max-subtraction; sums to 1 within 1e-12.
Vec64 softmax(const Vec64& logits, double temperature = 1.0);
Vec64 log_softmax(const Vec64& logits, double temperature = 1.0);

// Euclidean norm of a flat parameter/gradient vector.
double global_norm(const Vec64& v);

}  // namespace distlab
