#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace distlab {

struct SuiteResult {
    std::string name;
    bool pass = false;
    double max_err = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

struct CheckOptions {
    std::uint64_t seed = 2024;
    int loo_instances = 100;
    int gradient_configs = 100;
    // Negative-control hook: perturbs one leave-one-out term inside the
    // batch-reward suite so it must fail.
    bool inject_loo_fault = false;
};

// Brute-force oracles for the leave-one-out rewards: every instance is
// recomputed by literally rebuilding each (N-1)-subset.
SuiteResult check_loo_batch_oracle(const CheckOptions& opts);
// Oracle performing N+1 independent EMA updates per instance.
SuiteResult check_ema_loo_oracle(const CheckOptions& opts);

// Central finite differences (h = 1e-5), relative error < 1e-4.
SuiteResult check_gradient_mlp(const CheckOptions& opts);
SuiteResult check_gradient_gaussian_logprob(const CheckOptions& opts);
SuiteResult check_gradient_grpo_loss(const CheckOptions& opts);

// Schedule continuity, clamp bounds, deadband and monotone response.
SuiteResult check_entropy_controller(const CheckOptions& opts);

std::vector<SuiteResult> run_all_checks(const CheckOptions& opts);

nlohmann::json checks_to_json(const std::vector<SuiteResult>& results);

}  // namespace distlab
