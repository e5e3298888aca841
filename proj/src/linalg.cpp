#include "distlab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace distlab {

bool all_finite(const Vec64& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void ensure_finite(const Vec64& v, const std::string& what) {
    if (!all_finite(v)) throw std::runtime_error("non-finite values in " + what);
}

void ensure_finite(double v, const std::string& what) {
    if (!std::isfinite(v)) throw std::runtime_error("non-finite value in " + what);
}

double dot(const Vec64& a, const Vec64& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double sum(const Vec64& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc;
}

double mean(const Vec64& v) {
    if (v.empty()) throw std::invalid_argument("mean: empty vector");
    return sum(v) / static_cast<double>(v.size());
}

Vec64 affine(const Mat64& w, const Vec64& b, const Vec64& x) {
    if (w.cols != static_cast<int>(x.size()))
        throw std::invalid_argument("affine: input size mismatch");
    if (w.rows != static_cast<int>(b.size()))
        throw std::invalid_argument("affine: bias size mismatch");
    Vec64 y(b);
    for (int i = 0; i < w.rows; ++i) {
        const double* row = &w.data[static_cast<std::size_t>(i) * w.cols];
        double acc = 0.0;
        for (int j = 0; j < w.cols; ++j) acc += row[j] * x[j];
        y[i] += acc;
    }
    return y;
}

void affine_backward(const Mat64& w, const Vec64& x, const Vec64& y_grad,
                     Mat64& w_grad, Vec64& b_grad, Vec64& x_grad) {
    if (static_cast<int>(y_grad.size()) != w.rows)
        throw std::invalid_argument("affine_backward: grad size mismatch");
    for (int i = 0; i < w.rows; ++i) {
        const double g = y_grad[i];
        b_grad[i] += g;
        const double* row = &w.data[static_cast<std::size_t>(i) * w.cols];
        double* grow = &w_grad.data[static_cast<std::size_t>(i) * w.cols];
        for (int j = 0; j < w.cols; ++j) {
            grow[j] += g * x[j];
            x_grad[j] += g * row[j];
        }
    }
}

Vec64 softmax(const Vec64& logits, double temperature) {
    Vec64 out = log_softmax(logits, temperature);
    for (double& v : out) v = std::exp(v);
    return out;
}

Vec64 log_softmax(const Vec64& logits, double temperature) {
    if (temperature <= 0.0) throw std::invalid_argument("softmax: temperature must be > 0");
    if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
    if (!all_finite(logits)) throw std::invalid_argument("softmax: non-finite logits");

    Vec64 scaled(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / temperature;
    const double m = *std::max_element(scaled.begin(), scaled.end());
    double z = 0.0;
    for (double v : scaled) z += std::exp(v - m);
    const double lse = m + std::log(z);
    for (double& v : scaled) v -= lse;
    return scaled;
}

double global_norm(const Vec64& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

}  // namespace distlab
