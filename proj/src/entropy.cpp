#include "distlab/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace distlab {

void EntropyConfig::validate() const {
    if (!(c_min > 0.0 && c_min <= c0 && c0 <= c_max))
        throw std::invalid_argument("EntropyConfig: need 0 < c_min <= c0 <= c_max");
    if (target < 0.0 || target > 1.0)
        throw std::invalid_argument("EntropyConfig: target must lie in [0,1]");
    if (deadband < 0.0) throw std::invalid_argument("EntropyConfig: deadband must be >= 0");
    if (!(warmup_end > 0.0 && warmup_end < flat_end && flat_end < 1.0))
        throw std::invalid_argument("EntropyConfig: need 0 < warmup_end < flat_end < 1");
}

double token_entropy(const Vec64& probs) {
    if (probs.empty()) throw std::invalid_argument("token_entropy: empty distribution");
    double total = 0.0;
    double h = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p))
            throw std::invalid_argument("token_entropy: probabilities must be >= 0");
        total += p;
        if (p > 0.0) h -= p * std::log(p);
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument("token_entropy: probabilities must sum to 1");
    return h;
}

double normalized_entropy_fraction(const Vec64& per_token_entropy, int vocab_size) {
    if (per_token_entropy.empty())
        throw std::invalid_argument("normalized_entropy_fraction: empty sequence");
    if (vocab_size < 2)
        throw std::invalid_argument("normalized_entropy_fraction: vocab size must be >= 2");
    const double h_max = std::log(static_cast<double>(vocab_size));
    for (double h : per_token_entropy) {
        if (h < -1e-9 || h > h_max + 1e-9)
            throw std::invalid_argument("normalized_entropy_fraction: entropy out of [0, log K]");
    }
    return mean(per_token_entropy) / h_max;
}

double c_sched(double p, const EntropyConfig& cfg) {
    cfg.validate();
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("c_sched: progress must lie in [0,1]");
    if (p <= cfg.warmup_end) return cfg.c0 * (p / cfg.warmup_end);
    if (p <= cfg.flat_end) return cfg.c0;
    const double u = (p - cfg.flat_end) / (1.0 - cfg.flat_end);  // (0, 1]
    return cfg.c_min + (cfg.c0 - cfg.c_min) * 0.5 * (1.0 + std::cos(u * 3.14159265358979323846));
}

double c_eff(double p, double h_hat, const EntropyConfig& cfg) {
    if (h_hat < 0.0 || h_hat > 1.0)
        throw std::invalid_argument("c_eff: entropy fraction must lie in [0,1]");
    const double base = c_sched(p, cfg);
    const double e = cfg.target - h_hat;
    if (std::abs(e) <= cfg.deadband) return base;
    return std::clamp(base * std::exp(cfg.gain * e), cfg.c_min, cfg.c_max);
}

}  // namespace distlab
