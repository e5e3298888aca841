#pragma once

#include <functional>

#include "distlab/linalg.hpp"

namespace distlab {

using ScalarFn = std::function<double(const Vec64&)>;

// Central-difference gradient of f at `point`.
Vec64 finite_diff_grad(const ScalarFn& f, const Vec64& point, double h);

// max_i |(f(x+h e_i) - f(x-h e_i)) / 2h - g_i| / max(1, |g_i|)
double finite_diff_check(const ScalarFn& f, const Vec64& point,
                         const Vec64& analytic_grad, double h);

}  // namespace distlab
