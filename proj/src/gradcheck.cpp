#include "distlab/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace distlab {

Vec64 finite_diff_grad(const ScalarFn& f, const Vec64& point, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_grad: h must be > 0");
    Vec64 x = point;
    Vec64 g(point.size(), 0.0);
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double fp = f(x);
        x[i] = saved - h;
        const double fm = f(x);
        x[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_grad: non-finite function value");
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

double finite_diff_check(const ScalarFn& f, const Vec64& point,
                         const Vec64& analytic_grad, double h) {
    if (point.size() != analytic_grad.size())
        throw std::invalid_argument("finite_diff_check: grad size mismatch");
    const Vec64 numeric = finite_diff_grad(f, point, h);
    double worst = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double denom = std::max(1.0, std::abs(analytic_grad[i]));
        worst = std::max(worst, std::abs(numeric[i] - analytic_grad[i]) / denom);
    }
    return worst;
}

}  // namespace distlab
