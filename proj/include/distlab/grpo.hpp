#pragma once

#include <vector>

#include "distlab/linalg.hpp"

namespace distlab {

// Composite reward: weighted sum of the two instance-level terms and the
// distribution-level term.
struct RewardBreakdown {
    double r_align = 0.0;
    double r_pref = 0.0;
    double r_dist = 0.0;
    double w_c = 1.0;
    double w_h = 1.0;
    double w_fid = 1.0;

    double total() const { return w_c * r_align + w_h * r_pref + w_fid * r_dist; }
};

// How the sequence-level probability ratio is formed from per-token
// log-probs: exp of the mean difference (length-normalized, the default),
// or the plain product of per-token ratios (exp of the summed difference).
enum class RatioMode { MeanLogProb, TokenProduct };

struct GrpoConfig {
    int group_size = 12;
    int epochs = 1;
    double clip_eps = 0.2;
    double kl_beta = 3.0;
    double adv_eps = 1e-4;
    RatioMode ratio_mode = RatioMode::MeanLogProb;

    void validate() const;
};

// One rollout as seen by the loss: fixed reward and old/ref log-probs, plus
// the current (recomputed each epoch) per-token log-probs and entropies.
struct GroupSample {
    double reward = 0.0;
    double mean_logp_old = 0.0;
    Vec64 logps_new;
    Vec64 entropies;
    double mean_logp_ref = 0.0;
    bool has_ref = false;
};

struct GroupBatch {
    std::vector<GroupSample> samples;
};

// A_j = (r_j - mean) / (population std + adv_eps).
Vec64 group_advantages(const Vec64& rewards, double adv_eps);

// rho = exp(lbar_new - lbar_old).
double sequence_ratio(double mean_logp_new, double mean_logp_old);

// -min(rho * A, clip(rho, 1-eps, 1+eps) * A)
double clipped_surrogate(double rho, double advantage, double clip_eps);

// e^d - d - 1 with d = lbar_ref - lbar_new; nonnegative, zero iff d = 0.
double approx_kl(double mean_logp_ref, double mean_logp_new);

struct GrpoLossResult {
    double loss = 0.0;
    double surrogate_mean = 0.0;
    double entropy_mean = 0.0;  // mean over samples of per-sample mean entropy
    double kl_mean = 0.0;
    double ratio_mean = 0.0;
    double clip_fraction = 0.0;
    // d loss / d mean new log-prob of sample j, and d loss / d mean entropy.
    Vec64 d_mean_logp;
    Vec64 d_mean_entropy;
};

// loss = mean_j[clipped term] - c_eff * entropy_mean + beta * mean_j[KL_j].
// `advantages` must be aligned with batch.samples (one value per sample).
GrpoLossResult grpo_loss(const GroupBatch& batch, const Vec64& advantages,
                         const GrpoConfig& cfg, double c_eff);

// Convenience form: advantages computed from the batch rewards (needs G >= 2).
GrpoLossResult grpo_loss(const GroupBatch& batch, const GrpoConfig& cfg, double c_eff);

}  // namespace distlab
