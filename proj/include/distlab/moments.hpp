#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "distlab/linalg.hpp"

namespace distlab {

// N feature vectors of dimension D, stored row-major.
struct FeatureBatch {
    int n = 0;
    int d = 0;
    Vec64 data;

    FeatureBatch() = default;
    FeatureBatch(int n_, int d_) : n(n_), d(d_), data(static_cast<std::size_t>(n_) * d_, 0.0) {}

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * d + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * d + j]; }
    const double* row(int i) const { return &data[static_cast<std::size_t>(i) * d]; }
    double* row(int i) { return &data[static_cast<std::size_t>(i) * d]; }
    void validate() const;
};

// Per-dimension mean and standard deviation; carries the second raw moment
// when it is needed for EMA blending.
struct MomentPair {
    Vec64 mu;
    Vec64 sigma;
    std::optional<Vec64> m2;

    int dim() const { return static_cast<int>(mu.size()); }
};

// Running decayed estimates of the generator's feature mean and second raw
// moment. The first observed batch is adopted verbatim.
struct EmaMomentState {
    Vec64 mu;
    Vec64 m2;
    double alpha = 0.5;
    double eps_var = 1e-6;
    bool initialized = false;

    // sigma = sqrt(max(m2 - mu*mu, 0) + eps_var)
    MomentPair moments() const;
};

inline constexpr double kDefaultEpsVar = 1e-6;

MomentPair batch_moments(const FeatureBatch& batch, double eps_var = kDefaultEpsVar);

// ||mu_ref - mu_gen||^2 + ||sigma_ref - sigma_gen||^2, fused Kahan pass.
double fid_diag(const MomentPair& ref, const MomentPair& gen);

// Moments of every leave-one-out subset, from one shared S1/S2 pass. O(N*D).
std::vector<MomentPair> loo_moments(const FeatureBatch& batch, double eps_var = kDefaultEpsVar);

// r_i = FID(ref; moments without i) - FID(ref; full-batch moments).
// Positive r_i means removing sample i worsens the distance, i.e. i helps.
Vec64 loo_batch_rewards(const FeatureBatch& batch, const MomentPair& ref,
                        double eps_var = kDefaultEpsVar);

EmaMomentState ema_update(const EmaMomentState& state, const Vec64& batch_mu,
                          const Vec64& batch_m2);

struct EmaLooResult {
    Vec64 rewards;
    EmaMomentState next_state;  // the one real full-batch update
    double fid_full = 0.0;
};

// For each sample, a hypothetical EMA update with the leave-one-out batch
// moments; reward is the change in EMA-aligned distance versus the real
// update. Hypothetical updates never touch the returned state.
EmaLooResult ema_loo_rewards(const EmaMomentState& state, const FeatureBatch& batch,
                             const MomentPair& ref);

// Plain batch moments of a sample set; reference sigma carries no variance
// floor by default.
MomentPair reference_moments_from_samples(const FeatureBatch& samples, double eps_var = 0.0);

nlohmann::json reference_to_json(const MomentPair& ref, const std::string& source, int n_samples);
MomentPair reference_from_json(const nlohmann::json& doc);

}  // namespace distlab
