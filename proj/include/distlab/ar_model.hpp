#pragma once

#include <json.hpp>

#include "distlab/mlp.hpp"
#include "distlab/rng.hpp"

namespace distlab {

struct SamplerConfig {
    double temperature = 1.0;
    int top_k = 0;      // 0 disables top-k
    double top_p = 1.0; // 1.0 disables nucleus truncation
    double cfg_scale = 1.5;
    bool greedy = false;  // argmax selection; recorded log-probs/entropies unchanged

    void validate(int vocab_size) const;
};

// Class-conditional next-token model: an MLP over the class embedding, a
// fixed-width window of token-embedding history (zero-padded at the start),
// and a one-hot position code. Class row `n_classes` is the learned
// null-class embedding used for the unconditional guidance branch.
struct DiscreteArPolicy {
    int vocab = 16;
    int seq_len = 16;
    int n_classes = 8;
    int hist_window = 4;
    Mat64 class_emb;  // (n_classes + 1) x class_emb_dim
    Mat64 tok_emb;    // vocab x tok_emb_dim
    MlpParams net;    // input_dim() -> hidden -> vocab

    static DiscreteArPolicy init(int vocab, int seq_len, int n_classes, int hist_window,
                                 int class_emb_dim, int tok_emb_dim, int hidden, Rng& rng);

    int class_emb_dim() const { return class_emb.cols; }
    int tok_emb_dim() const { return tok_emb.cols; }
    int input_dim() const { return class_emb.cols + hist_window * tok_emb.cols + seq_len; }
    int null_class() const { return n_classes; }
    void validate() const;
};

struct ArGrads {
    Mat64 class_emb;
    Mat64 tok_emb;
    MlpGrads net;

    static ArGrads zeros_like(const DiscreteArPolicy& policy);
    void clear();
};

// The per-step sampling distribution after guidance, temperature and
// truncation, plus the entropy of the raw (temperature-1, untruncated)
// softmax of the guided logits.
struct ArStepDist {
    Vec64 log_q;               // full vocab; -inf outside the support
    std::vector<int> support;  // ascending token ids with nonzero probability
    double entropy_pre = 0.0;
};

ArStepDist ar_step_dist(const DiscreteArPolicy& policy, int cls,
                        const std::vector<int>& prefix, int t, const SamplerConfig& cfg);

// One rollout: tokens, their log-probs under the sampling distribution, and
// the pre-truncation entropy at every step.
struct RolloutSample {
    std::vector<int> tokens;
    Vec64 logps;
    Vec64 entropies;
    int cls = 0;
    Vec64 features;  // filled by the environment after decoding
};

RolloutSample ar_sample(const DiscreteArPolicy& policy, int cls, const SamplerConfig& cfg,
                        Rng& rng);

struct ArScore {
    Vec64 logps;
    Vec64 entropies;
};

// Teacher-forced log-probs and entropies of a given sequence under the same
// effective distribution used at sampling time. Re-scoring a fresh sample
// with unchanged parameters reproduces its recorded values exactly.
ArScore ar_logprob(const DiscreteArPolicy& policy, const std::vector<int>& tokens, int cls,
                   const SamplerConfig& cfg);

// Accumulates parameter gradients of
//   d_mean_logp * mean_t(log q_t(x_t)) + d_mean_entropy * mean_t(H_t)
// into grads, where q is the effective sampling distribution and H the
// pre-truncation entropy.
void ar_score_backward(const DiscreteArPolicy& policy, const std::vector<int>& tokens, int cls,
                       const SamplerConfig& cfg, double d_mean_logp, double d_mean_entropy,
                       ArGrads& grads);

std::size_t ar_param_count(const DiscreteArPolicy& policy);
Vec64 ar_flatten(const DiscreteArPolicy& policy);
Vec64 ar_flatten_grads(const ArGrads& grads);
void ar_unflatten(DiscreteArPolicy& policy, const Vec64& flat);

nlohmann::json ar_policy_to_json(const DiscreteArPolicy& policy);
DiscreteArPolicy ar_policy_from_json(const nlohmann::json& doc);

}  // namespace distlab
