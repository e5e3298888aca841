#pragma once

#include "distlab/linalg.hpp"

namespace distlab {

// Adaptive entropy regularization: warmup-flat-cosine base schedule plus a
// deadbanded exponential feedback law on the normalized entropy fraction.
struct EntropyConfig {
    double target = 0.78;
    double deadband = 0.015;
    double gain = 3.0;
    double c0 = 2.2e-3;
    double c_min = 7e-5;
    double c_max = 4e-3;
    double warmup_end = 0.05;
    double flat_end = 0.85;

    void validate() const;
};

// H = -sum p log p with 0 log 0 := 0. Probs must be nonnegative and sum to 1
// within 1e-9.
double token_entropy(const Vec64& probs);

// Mean per-token entropy divided by log(vocab size); lies in [0, 1].
double normalized_entropy_fraction(const Vec64& per_token_entropy, int vocab_size);

// Base schedule over training progress p in [0,1]: linear 0 -> c0 on
// [0, warmup_end], flat c0 on (warmup_end, flat_end], cosine c0 -> c_min on
// (flat_end, 1]. Continuous at both breakpoints.
double c_sched(double p, const EntropyConfig& cfg);

// Feedback law: inside the deadband returns c_sched(p) unchanged; outside,
// clamp(c_sched(p) * exp(gain * (target - h_hat)), c_min, c_max).
double c_eff(double p, double h_hat, const EntropyConfig& cfg);

}  // namespace distlab
