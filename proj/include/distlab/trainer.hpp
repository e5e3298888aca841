#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "distlab/ar_env.hpp"
#include "distlab/ar_model.hpp"
#include "distlab/entropy.hpp"
#include "distlab/grpo.hpp"
#include "distlab/line2d.hpp"
#include "distlab/moments.hpp"

namespace distlab {

struct RewardWeights {
    double align = 1.0;
    double pref = 1.0;
    double dist = 1.0;
};

struct Toy2dConfig {
    int latent_dim = 8;
    int hidden = 64;
    bool pathwise = false;
    double line_noise = 0.05;
    int ref_samples = 10000;
    std::uint64_t ref_seed = 1;
};

struct MleConfig {
    int batch_size = 64;
};

struct ExperimentConfig {
    std::string env = "toy2d";  // "toy2d" | "ar"
    std::uint64_t seed = 1234;
    int iterations = 600;
    double learning_rate = 1e-5;
    double grad_clip_norm = 1.0;
    double ema_alpha = 0.5;
    double ema_eps_var = 1e-6;
    int eval_interval = 50;
    int eval_samples = 2048;
    int checkpoint_interval = 0;  // 0 disables periodic checkpoints
    std::string init_checkpoint;
    std::string out_dir;
    GrpoConfig grpo;
    EntropyConfig entropy;
    bool entropy_enabled = true;
    // Pin the entropy target to the starting policy's measured fraction
    // plus 0.08 instead of using entropy.target directly.
    bool entropy_calibrate = true;
    SamplerConfig sampler;
    RewardWeights weights;
    Toy2dConfig toy2d;
    ArEnvConfig ar;
    MleConfig mle;

    void validate() const;
};

struct TrainingRecord {
    int iter = 0;
    double reward_mean = 0.0;
    double reward_align = 0.0;
    double reward_pref = 0.0;
    double reward_dist = 0.0;
    double ema_fid = 0.0;
    double entropy_mean = 0.0;
    double entropy_frac = 0.0;
    double c_eff = 0.0;
    double kl_mean = 0.0;
    double loss = 0.0;
    long long ms = 0;
};

// CSV schema used for the metrics stream.
extern const char* const kMetricsCsvHeader;  // iter,reward_mean,...,ms
std::string record_to_csv(const TrainingRecord& r);

struct EvalResult {
    double fid = 0.0;
    double reward_mean = 0.0;  // instance-level composite (align + pref terms)
    double reward_align = 0.0;
    double reward_pref = 0.0;
    double entropy_mean = 0.0;
    double entropy_frac = 0.0;
};

struct EvalPoint {
    int iter = 0;
    EvalResult metrics;
};

// Raised when a loss, gradient, or parameter turns non-finite; the run state
// has been handed to the hooks before this is thrown.
struct NumericalAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunHooks {
    std::function<void(const TrainingRecord&)> on_record;
    std::function<void(const EvalPoint&)> on_eval;
    std::function<void(int iter, const nlohmann::json& checkpoint)> on_checkpoint;
    // toy2d point-cloud dump at eval time: (iter, x, y) rows.
    std::function<void(int iter, const FeatureBatch& points)> on_points;
};

struct RunResult {
    std::vector<TrainingRecord> records;
    std::vector<EvalPoint> evals;
    nlohmann::json summary;
    nlohmann::json final_checkpoint;
};

// ---- 2D line-matching environment ------------------------------------------

struct Toy2dState {
    Gaussian2dPolicy policy;
    MomentPair ref;
    EmaMomentState ema;
    int update_count = 0;
};

EvalResult evaluate_toy2d(const Gaussian2dPolicy& policy, const MomentPair& ref, int n_samples,
                          std::uint64_t seed, double eps_var);
FeatureBatch toy2d_sample_batch(const Gaussian2dPolicy& policy, int n, std::uint64_t seed,
                                std::uint64_t stream_base);
// One toy2d iteration; dispatches between the score-function (GRPO) and
// pathwise modes on cfg.toy2d.pathwise.
TrainingRecord toy2d_iteration(Toy2dState& state, const ExperimentConfig& cfg, int iter_idx);
RunResult train_toy2d(const ExperimentConfig& cfg, const RunHooks& hooks = {});

// ---- discrete AR environment ------------------------------------------------

struct ArTrainState {
    DiscreteArPolicy policy;
    DiscreteArPolicy ref_policy;
    EmaMomentState ema;
    int update_count = 0;
};

// Captured internals of one iteration, for oracle-style verification.
struct ArIterationCapture {
    std::vector<RolloutSample> rollouts;
    std::vector<RewardBreakdown> rewards;
    Vec64 advantages;
    Vec64 old_mean_logps;
    Vec64 ref_mean_logps;
    double c_eff = 0.0;
    double loss = 0.0;
    double grad_norm_post_clip = 0.0;
    Vec64 params_before;
    Vec64 params_after;
    EmaMomentState ema_before;
    EmaMomentState ema_after;
};

// One full GRPO iteration per Algorithm-style semantics: one group of
// grpo.group_size rollouts per class, pooled features for the EMA-LOO
// distribution reward, per-group advantages, then grpo.epochs update steps.
// The EMA state advances exactly once.
TrainingRecord ar_grpo_iteration(ArTrainState& state, const ArEnv& env,
                                 const ExperimentConfig& cfg, int iter_idx,
                                 double entropy_target, ArIterationCapture* capture = nullptr);

EvalResult evaluate_ar(const DiscreteArPolicy& policy, const ArEnv& env,
                       const SamplerConfig& sampler, const RewardWeights& weights,
                       int n_samples, std::uint64_t seed, double eps_var);

RunResult train_ar_grpo(const ExperimentConfig& cfg, const RunHooks& hooks = {});

// Teacher-forced cross-entropy continuation training on the corpus.
RunResult train_ar_mle(const ExperimentConfig& cfg, const RunHooks& hooks = {});

// Shared helper: global-norm clip then one SGD step; returns the post-clip
// gradient norm.
double clip_and_step(Vec64& params, Vec64 grads, double lr, double clip_norm);

DiscreteArPolicy ar_policy_for_config(const ExperimentConfig& cfg);

}  // namespace distlab
