#include "distlab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace distlab {

namespace {

using Clock = std::chrono::steady_clock;

long long ms_since(Clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count();
}

double progress(int iter_idx, int total) {
    return total <= 0 ? 0.0 : static_cast<double>(iter_idx) / static_cast<double>(total);
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Rollout stream ids: one generator per rollout so results do not depend on
// evaluation order.
std::uint64_t rollout_stream(int iter_idx, int rollout_idx, int rollouts_per_iter) {
    return 1 + static_cast<std::uint64_t>(iter_idx) * rollouts_per_iter + rollout_idx;
}

void run_eval_hook(const RunHooks& hooks, std::vector<EvalPoint>& evals, int iter,
                   const EvalResult& metrics) {
    EvalPoint pt{iter, metrics};
    evals.push_back(pt);
    if (hooks.on_eval) hooks.on_eval(pt);
}

}  // namespace

const char* const kMetricsCsvHeader =
    "iter,reward_mean,reward_align,reward_pref,reward_dist,ema_fid,entropy_mean,"
    "entropy_frac,c_eff,kl_mean,loss,ms";

std::string record_to_csv(const TrainingRecord& r) {
    std::string line = std::to_string(r.iter);
    for (double v : {r.reward_mean, r.reward_align, r.reward_pref, r.reward_dist, r.ema_fid,
                     r.entropy_mean, r.entropy_frac, r.c_eff, r.kl_mean, r.loss}) {
        line += ',';
        line += fmt_double(v);
    }
    line += ',';
    line += std::to_string(r.ms);
    return line;
}

void ExperimentConfig::validate() const {
    if (env != "toy2d" && env != "ar")
        throw std::invalid_argument("ExperimentConfig: env must be toy2d or ar");
    if (iterations < 1) throw std::invalid_argument("ExperimentConfig: iterations must be >= 1");
    if (learning_rate < 0.0) throw std::invalid_argument("ExperimentConfig: bad learning rate");
    if (grad_clip_norm <= 0.0) throw std::invalid_argument("ExperimentConfig: bad grad clip");
    if (ema_alpha <= 0.0 || ema_alpha >= 1.0)
        throw std::invalid_argument("ExperimentConfig: ema_alpha must lie in (0,1)");
    if (ema_eps_var < 0.0) throw std::invalid_argument("ExperimentConfig: bad ema_eps_var");
    if (eval_interval < 1) throw std::invalid_argument("ExperimentConfig: bad eval_interval");
    if (eval_samples < 2) throw std::invalid_argument("ExperimentConfig: eval_samples must be >= 2");
    if (mle.batch_size < 1) throw std::invalid_argument("ExperimentConfig: bad mle batch size");
    grpo.validate();
    entropy.validate();
    sampler.validate(ar.vocab);
}

double clip_and_step(Vec64& params, Vec64 grads, double lr, double clip_norm) {
    if (params.size() != grads.size())
        throw std::invalid_argument("clip_and_step: size mismatch");
    ensure_finite(grads, "gradients");
    double norm = global_norm(grads);
    if (norm > clip_norm && norm > 0.0) {
        const double scale = clip_norm / norm;
        for (double& g : grads) g *= scale;
        norm = global_norm(grads);
    }
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
    ensure_finite(params, "parameters");
    return norm;
}

// ---- toy2d ------------------------------------------------------------------

FeatureBatch toy2d_sample_batch(const Gaussian2dPolicy& policy, int n, std::uint64_t seed,
                                std::uint64_t stream_base) {
    FeatureBatch batch(n, 2);
    for (int i = 0; i < n; ++i) {
        Rng rng(seed, stream_base + i);
        Vec64 z(policy.latent_dim);
        for (double& v : z) v = rng.normal();
        const Vec64 eps = {rng.normal(), rng.normal()};
        const Vec64 x = gaussian_sample(policy, z, eps);
        batch.at(i, 0) = x[0];
        batch.at(i, 1) = x[1];
    }
    return batch;
}

EvalResult evaluate_toy2d(const Gaussian2dPolicy& policy, const MomentPair& ref, int n_samples,
                          std::uint64_t seed, double eps_var) {
    if (n_samples < 2) throw std::invalid_argument("evaluate_toy2d: need at least 2 samples");
    EvalResult res;
    FeatureBatch batch(n_samples, 2);
    double ent_acc = 0.0;
    for (int i = 0; i < n_samples; ++i) {
        Rng rng(seed, 1 + static_cast<std::uint64_t>(i));
        Vec64 z(policy.latent_dim);
        for (double& v : z) v = rng.normal();
        const Vec64 eps = {rng.normal(), rng.normal()};
        const Gaussian2dHead head = gaussian_forward(policy, z);
        batch.at(i, 0) = head.mu[0] + head.sigma[0] * eps[0];
        batch.at(i, 1) = head.mu[1] + head.sigma[1] * eps[1];
        ent_acc += gaussian_entropy(head.sigma);
    }
    res.fid = fid_diag(ref, batch_moments(batch, eps_var));
    res.entropy_mean = ent_acc / n_samples;
    return res;
}

namespace {

struct Toy2dRollout {
    Vec64 z;
    Vec64 eps;
    Vec64 x;
    double logp_old = 0.0;
    double entropy = 0.0;
};

TrainingRecord toy2d_grpo_iteration(Toy2dState& state, const ExperimentConfig& cfg,
                                    int iter_idx) {
    const auto t0 = Clock::now();
    const int g = cfg.grpo.group_size;
    std::vector<Toy2dRollout> rollouts(g);
    FeatureBatch batch(g, 2);
    for (int i = 0; i < g; ++i) {
        Rng rng(cfg.seed, rollout_stream(iter_idx, i, g));
        Toy2dRollout& r = rollouts[i];
        r.z.resize(state.policy.latent_dim);
        for (double& v : r.z) v = rng.normal();
        r.eps = {rng.normal(), rng.normal()};
        const Gaussian2dHead head = gaussian_forward(state.policy, r.z);
        r.x = {head.mu[0] + head.sigma[0] * r.eps[0], head.mu[1] + head.sigma[1] * r.eps[1]};
        r.logp_old = gaussian_logprob(state.policy, r.z, r.x);
        r.entropy = gaussian_entropy(head.sigma);
        batch.at(i, 0) = r.x[0];
        batch.at(i, 1) = r.x[1];
    }

    const EmaLooResult dist = ema_loo_rewards(state.ema, batch, state.ref);
    state.ema = dist.next_state;

    Vec64 totals(g);
    double dist_acc = 0.0, ent_acc = 0.0;
    for (int i = 0; i < g; ++i) {
        RewardBreakdown rb;
        rb.r_dist = dist.rewards[i];
        rb.w_c = cfg.weights.align;
        rb.w_h = cfg.weights.pref;
        rb.w_fid = cfg.weights.dist;
        totals[i] = rb.total();
        dist_acc += dist.rewards[i];
        ent_acc += rollouts[i].entropy;
    }
    const Vec64 advantages = group_advantages(totals, cfg.grpo.adv_eps);

    TrainingRecord rec;
    rec.iter = iter_idx;
    rec.reward_mean = mean(totals);
    rec.reward_dist = dist_acc / g;
    rec.ema_fid = dist.fid_full;
    rec.entropy_mean = ent_acc / g;

    for (int epoch = 0; epoch < cfg.grpo.epochs; ++epoch) {
        GroupBatch gb;
        gb.samples.resize(g);
        for (int i = 0; i < g; ++i) {
            GroupSample& s = gb.samples[i];
            s.reward = totals[i];
            s.mean_logp_old = rollouts[i].logp_old;
            s.logps_new = {gaussian_logprob(state.policy, rollouts[i].z, rollouts[i].x)};
        }
        const GrpoLossResult res = grpo_loss(gb, advantages, cfg.grpo, 0.0);
        if (epoch == 0) {
            rec.loss = res.loss;
            rec.kl_mean = res.kl_mean;
        }
        MlpGrads grads = MlpGrads::zeros_like(state.policy.net);
        for (int i = 0; i < g; ++i) {
            gaussian_logprob_backward(state.policy, rollouts[i].z, rollouts[i].x,
                                      res.d_mean_logp[i], grads);
        }
        Vec64 flat_p, flat_g;
        mlp_flatten(state.policy.net, flat_p);
        mlp_flatten_grads(grads, flat_g);
        clip_and_step(flat_p, flat_g, cfg.learning_rate, cfg.grad_clip_norm);
        std::size_t cursor = 0;
        mlp_unflatten(state.policy.net, flat_p, cursor);
        ++state.update_count;
    }
    rec.ms = ms_since(t0);
    return rec;
}

TrainingRecord toy2d_pathwise_iteration(Toy2dState& state, const ExperimentConfig& cfg,
                                        int iter_idx) {
    const auto t0 = Clock::now();
    const int g = cfg.grpo.group_size;
    std::vector<Toy2dRollout> rollouts(g);
    FeatureBatch batch(g, 2);
    for (int i = 0; i < g; ++i) {
        Rng rng(cfg.seed, rollout_stream(iter_idx, i, g));
        Toy2dRollout& r = rollouts[i];
        r.z.resize(state.policy.latent_dim);
        for (double& v : r.z) v = rng.normal();
        r.eps = {rng.normal(), rng.normal()};
        r.x = gaussian_sample(state.policy, r.z, r.eps);
        batch.at(i, 0) = r.x[0];
        batch.at(i, 1) = r.x[1];
    }

    const MomentPair gen = batch_moments(batch, state.ema.eps_var);
    const double loss = fid_diag(state.ref, gen);

    // dF/dmu and dF/dm2 with sigma = sqrt(max(m2 - mu^2, 0) + eps).
    Vec64 d_mu(2, 0.0), d_m2(2, 0.0);
    for (int d = 0; d < 2; ++d) {
        const double dm = state.ref.mu[d] - gen.mu[d];
        const double ds = state.ref.sigma[d] - gen.sigma[d];
        d_mu[d] = -2.0 * dm;
        const double variance = (*gen.m2)[d] - gen.mu[d] * gen.mu[d];
        if (variance > 0.0) {
            const double dsig_dm2 = 0.5 / gen.sigma[d];
            d_mu[d] += -2.0 * ds * (-gen.mu[d] / gen.sigma[d]);
            d_m2[d] += -2.0 * ds * dsig_dm2;
        }
    }

    MlpGrads grads = MlpGrads::zeros_like(state.policy.net);
    const double inv_g = 1.0 / static_cast<double>(g);
    for (int i = 0; i < g; ++i) {
        Vec64 dx(2);
        for (int d = 0; d < 2; ++d)
            dx[d] = d_mu[d] * inv_g + d_m2[d] * 2.0 * rollouts[i].x[d] * inv_g;
        gaussian_sample_backward(state.policy, rollouts[i].z, rollouts[i].eps, dx, grads);
    }
    Vec64 flat_p, flat_g;
    mlp_flatten(state.policy.net, flat_p);
    mlp_flatten_grads(grads, flat_g);
    clip_and_step(flat_p, flat_g, cfg.learning_rate, cfg.grad_clip_norm);
    std::size_t cursor = 0;
    mlp_unflatten(state.policy.net, flat_p, cursor);
    ++state.update_count;

    state.ema = ema_update(state.ema, gen.mu, *gen.m2);

    TrainingRecord rec;
    rec.iter = iter_idx;
    rec.reward_mean = -loss;
    rec.reward_dist = -loss;
    rec.ema_fid = fid_diag(state.ref, state.ema.moments());
    rec.loss = loss;
    rec.ms = ms_since(t0);
    return rec;
}

}  // namespace

TrainingRecord toy2d_iteration(Toy2dState& state, const ExperimentConfig& cfg, int iter_idx) {
    return cfg.toy2d.pathwise ? toy2d_pathwise_iteration(state, cfg, iter_idx)
                              : toy2d_grpo_iteration(state, cfg, iter_idx);
}

RunResult train_toy2d(const ExperimentConfig& cfg, const RunHooks& hooks) {
    cfg.validate();
    RunResult out;

    Toy2dState state;
    if (!cfg.init_checkpoint.empty()) {
        std::ifstream in(cfg.init_checkpoint);
        if (!in) throw std::invalid_argument("cannot open checkpoint " + cfg.init_checkpoint);
        nlohmann::json doc;
        in >> doc;
        state.policy = gaussian2d_from_json(doc);
    } else {
        Rng init_rng(cfg.seed, 0);
        state.policy = Gaussian2dPolicy::init(cfg.toy2d.latent_dim, cfg.toy2d.hidden, init_rng);
    }
    const FeatureBatch ref_samples =
        line_dataset(cfg.toy2d.ref_samples, cfg.toy2d.ref_seed, cfg.toy2d.line_noise);
    state.ref = reference_moments_from_samples(ref_samples, 0.0);
    state.ema.alpha = cfg.ema_alpha;
    state.ema.eps_var = cfg.ema_eps_var;

    const std::uint64_t eval_seed = cfg.seed ^ 0x5EEDBA5EULL;
    auto eval_now = [&](int iter) {
        const EvalResult ev =
            evaluate_toy2d(state.policy, state.ref, cfg.eval_samples, eval_seed, cfg.ema_eps_var);
        run_eval_hook(hooks, out.evals, iter, ev);
        if (hooks.on_points) {
            const FeatureBatch pts = toy2d_sample_batch(state.policy, std::min(cfg.eval_samples, 512),
                                                        eval_seed, 1);
            hooks.on_points(iter, pts);
        }
    };

    eval_now(0);
    try {
        for (int iter = 0; iter < cfg.iterations; ++iter) {
            TrainingRecord rec = toy2d_iteration(state, cfg, iter);
            out.records.push_back(rec);
            if (hooks.on_record) hooks.on_record(rec);
            const int done = iter + 1;
            if (done % cfg.eval_interval == 0 || done == cfg.iterations) eval_now(done);
            if (cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0 &&
                hooks.on_checkpoint)
                hooks.on_checkpoint(done, gaussian2d_to_json(state.policy));
        }
    } catch (const std::runtime_error& e) {
        if (hooks.on_checkpoint) hooks.on_checkpoint(-1, gaussian2d_to_json(state.policy));
        throw NumericalAbort(std::string("toy2d run aborted: ") + e.what());
    }

    out.final_checkpoint = gaussian2d_to_json(state.policy);
    const double fid_initial = out.evals.front().metrics.fid;
    const double fid_final = out.evals.back().metrics.fid;
    out.summary = {{"env", "toy2d"},
                   {"seed", cfg.seed},
                   {"iterations", cfg.iterations},
                   {"updates", state.update_count},
                   {"fid_initial", fid_initial},
                   {"fid_final", fid_final},
                   {"fid_ratio", fid_initial > 0.0 ? fid_final / fid_initial : 0.0}};
    return out;
}

// ---- discrete AR ------------------------------------------------------------

DiscreteArPolicy ar_policy_for_config(const ExperimentConfig& cfg) {
    Rng init_rng(cfg.seed, 0);
    return DiscreteArPolicy::init(cfg.ar.vocab, cfg.ar.seq_len, cfg.ar.n_classes,
                                  cfg.ar.hist_window, cfg.ar.class_emb_dim, cfg.ar.tok_emb_dim,
                                  cfg.ar.hidden, init_rng);
}

EvalResult evaluate_ar(const DiscreteArPolicy& policy, const ArEnv& env,
                       const SamplerConfig& sampler, const RewardWeights& weights,
                       int n_samples, std::uint64_t seed, double eps_var) {
    if (n_samples < 2) throw std::invalid_argument("evaluate_ar: need at least 2 samples");
    FeatureBatch batch(n_samples, env.cfg.feature_dim);
    EvalResult res;
    double ent_acc = 0.0;
    for (int i = 0; i < n_samples; ++i) {
        Rng rng(seed, 1 + static_cast<std::uint64_t>(i));
        const int cls = i % policy.n_classes;
        const RolloutSample s = ar_sample(policy, cls, sampler, rng);
        const Vec64 f = env.embedder.embed(s.tokens);
        std::copy(f.begin(), f.end(), batch.row(i));
        res.reward_align += env.align(f, cls);
        res.reward_pref += pref_reward(s.tokens);
        ent_acc += mean(s.entropies);
    }
    res.reward_align /= n_samples;
    res.reward_pref /= n_samples;
    res.reward_mean = weights.align * res.reward_align + weights.pref * res.reward_pref;
    res.entropy_mean = ent_acc / n_samples;
    res.entropy_frac = res.entropy_mean / std::log(static_cast<double>(policy.vocab));
    res.fid = fid_diag(env.ref_moments, batch_moments(batch, eps_var));
    return res;
}

TrainingRecord ar_grpo_iteration(ArTrainState& state, const ArEnv& env,
                                 const ExperimentConfig& cfg, int iter_idx,
                                 double entropy_target, ArIterationCapture* capture) {
    const auto t0 = Clock::now();
    const int g = cfg.grpo.group_size;
    const int n_groups = state.policy.n_classes;
    const int n = n_groups * g;

    // (1)-(2) rollouts and decoded features, one group per class.
    std::vector<RolloutSample> rollouts;
    rollouts.reserve(n);
    FeatureBatch batch(n, env.cfg.feature_dim);
    for (int grp = 0; grp < n_groups; ++grp) {
        for (int j = 0; j < g; ++j) {
            const int idx = grp * g + j;
            Rng rng(cfg.seed, rollout_stream(iter_idx, idx, n));
            RolloutSample s = ar_sample(state.policy, grp, cfg.sampler, rng);
            s.features = env.embedder.embed(s.tokens);
            std::copy(s.features.begin(), s.features.end(), batch.row(idx));
            rollouts.push_back(std::move(s));
        }
    }

    // (3) reward components; the EMA state advances exactly once, here.
    const EmaLooResult dist = ema_loo_rewards(state.ema, batch, env.ref_moments);
    if (capture) capture->ema_before = state.ema;
    state.ema = dist.next_state;

    std::vector<RewardBreakdown> rewards(n);
    Vec64 totals(n);
    TrainingRecord rec;
    rec.iter = iter_idx;
    for (int i = 0; i < n; ++i) {
        RewardBreakdown& rb = rewards[i];
        rb.r_align = env.align(rollouts[i].features, rollouts[i].cls);
        rb.r_pref = pref_reward(rollouts[i].tokens);
        rb.r_dist = dist.rewards[i];
        rb.w_c = cfg.weights.align;
        rb.w_h = cfg.weights.pref;
        rb.w_fid = cfg.weights.dist;
        totals[i] = rb.total();
        rec.reward_align += rb.r_align;
        rec.reward_pref += rb.r_pref;
        rec.reward_dist += rb.r_dist;
    }
    rec.reward_align /= n;
    rec.reward_pref /= n;
    rec.reward_dist /= n;
    rec.reward_mean = mean(totals);
    rec.ema_fid = dist.fid_full;

    // (5) group advantages within each class group.
    Vec64 advantages(n);
    for (int grp = 0; grp < n_groups; ++grp) {
        Vec64 slice(totals.begin() + grp * g, totals.begin() + (grp + 1) * g);
        const Vec64 adv = group_advantages(slice, cfg.grpo.adv_eps);
        std::copy(adv.begin(), adv.end(), advantages.begin() + grp * g);
    }

    // (6) cached old log-probs come from the sampling-time records; the KL
    // reference scores are fixed across epochs because the reference policy
    // is frozen.
    Vec64 old_mean_logps(n), ref_mean_logps(n, 0.0);
    double ent_acc = 0.0;
    for (int i = 0; i < n; ++i) {
        old_mean_logps[i] = mean(rollouts[i].logps);
        ent_acc += mean(rollouts[i].entropies);
        if (cfg.grpo.kl_beta > 0.0) {
            const ArScore ref =
                ar_logprob(state.ref_policy, rollouts[i].tokens, rollouts[i].cls, cfg.sampler);
            ref_mean_logps[i] = mean(ref.logps);
        }
    }
    rec.entropy_mean = ent_acc / n;
    const double h_hat = rec.entropy_mean / std::log(static_cast<double>(state.policy.vocab));
    rec.entropy_frac = h_hat;

    EntropyConfig ecfg = cfg.entropy;
    ecfg.target = entropy_target;
    const double p = progress(iter_idx, cfg.iterations);
    rec.c_eff = cfg.entropy_enabled ? c_eff(p, std::clamp(h_hat, 0.0, 1.0), ecfg) : 0.0;

    if (capture) {
        capture->rollouts = rollouts;
        capture->rewards = rewards;
        capture->advantages = advantages;
        capture->old_mean_logps = old_mean_logps;
        capture->ref_mean_logps = ref_mean_logps;
        capture->c_eff = rec.c_eff;
        capture->ema_after = state.ema;
        capture->params_before = ar_flatten(state.policy);
    }

    // (7) K optimization epochs.
    ArGrads grads = ArGrads::zeros_like(state.policy);
    for (int epoch = 0; epoch < cfg.grpo.epochs; ++epoch) {
        GroupBatch gb;
        gb.samples.resize(n);
        for (int i = 0; i < n; ++i) {
            GroupSample& s = gb.samples[i];
            s.reward = totals[i];
            s.mean_logp_old = old_mean_logps[i];
            const ArScore score =
                ar_logprob(state.policy, rollouts[i].tokens, rollouts[i].cls, cfg.sampler);
            s.logps_new = score.logps;
            s.entropies = score.entropies;
            s.has_ref = cfg.grpo.kl_beta > 0.0;
            s.mean_logp_ref = ref_mean_logps[i];
        }
        const GrpoLossResult res = grpo_loss(gb, advantages, cfg.grpo, rec.c_eff);
        if (epoch == 0) {
            rec.loss = res.loss;
            rec.kl_mean = res.kl_mean;
            if (capture) capture->loss = res.loss;
        }
        grads.clear();
        for (int i = 0; i < n; ++i) {
            ar_score_backward(state.policy, rollouts[i].tokens, rollouts[i].cls, cfg.sampler,
                              res.d_mean_logp[i], res.d_mean_entropy[i], grads);
        }
        Vec64 flat_p = ar_flatten(state.policy);
        const double post_norm = clip_and_step(flat_p, ar_flatten_grads(grads),
                                               cfg.learning_rate, cfg.grad_clip_norm);
        ar_unflatten(state.policy, flat_p);
        ++state.update_count;
        if (capture && epoch == 0) capture->grad_norm_post_clip = post_norm;
    }
    if (capture) capture->params_after = ar_flatten(state.policy);

    rec.ms = ms_since(t0);
    return rec;
}

namespace {

DiscreteArPolicy load_or_init_ar_policy(const ExperimentConfig& cfg) {
    if (!cfg.init_checkpoint.empty()) {
        std::ifstream in(cfg.init_checkpoint);
        if (!in) throw std::invalid_argument("cannot open checkpoint " + cfg.init_checkpoint);
        nlohmann::json doc;
        in >> doc;
        return ar_policy_from_json(doc);
    }
    return ar_policy_for_config(cfg);
}

}  // namespace

RunResult train_ar_grpo(const ExperimentConfig& cfg, const RunHooks& hooks) {
    cfg.validate();
    RunResult out;

    const ArEnv env = ArEnv::create(cfg.ar);
    ArTrainState state;
    state.policy = load_or_init_ar_policy(cfg);
    state.ref_policy = state.policy;  // frozen pre-run snapshot
    state.ema.alpha = cfg.ema_alpha;
    state.ema.eps_var = cfg.ema_eps_var;

    const std::uint64_t eval_seed = cfg.seed ^ 0x5EEDBA5EULL;
    auto eval_now = [&](int iter) {
        const EvalResult ev = evaluate_ar(state.policy, env, cfg.sampler, cfg.weights,
                                          cfg.eval_samples, eval_seed, cfg.ema_eps_var);
        run_eval_hook(hooks, out.evals, iter, ev);
        return ev;
    };

    const EvalResult initial = eval_now(0);
    double entropy_target = cfg.entropy.target;
    if (cfg.entropy_enabled && cfg.entropy_calibrate)
        entropy_target = std::clamp(initial.entropy_frac + 0.08, 0.0, 1.0);

    try {
        for (int iter = 0; iter < cfg.iterations; ++iter) {
            TrainingRecord rec = ar_grpo_iteration(state, env, cfg, iter, entropy_target);
            out.records.push_back(rec);
            if (hooks.on_record) hooks.on_record(rec);
            const int done = iter + 1;
            if (done % cfg.eval_interval == 0 || done == cfg.iterations) eval_now(done);
            if (cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0 &&
                hooks.on_checkpoint)
                hooks.on_checkpoint(done, ar_policy_to_json(state.policy));
        }
    } catch (const std::runtime_error& e) {
        if (hooks.on_checkpoint) hooks.on_checkpoint(-1, ar_policy_to_json(state.policy));
        throw NumericalAbort(std::string("ar run aborted: ") + e.what());
    }

    out.final_checkpoint = ar_policy_to_json(state.policy);
    out.summary = {{"env", "ar"},
                   {"mode", "grpo"},
                   {"seed", cfg.seed},
                   {"iterations", cfg.iterations},
                   {"updates", state.update_count},
                   {"entropy_target", entropy_target},
                   {"fid_initial", out.evals.front().metrics.fid},
                   {"fid_final", out.evals.back().metrics.fid},
                   {"reward_final", out.evals.back().metrics.reward_mean}};
    return out;
}

RunResult train_ar_mle(const ExperimentConfig& cfg, const RunHooks& hooks) {
    cfg.validate();
    RunResult out;

    const ArEnv env = ArEnv::create(cfg.ar);
    DiscreteArPolicy policy = load_or_init_ar_policy(cfg);
    int update_count = 0;

    // Teacher forcing scores the plain conditional distribution.
    SamplerConfig neutral;
    neutral.temperature = 1.0;
    neutral.top_k = 0;
    neutral.top_p = 1.0;
    neutral.cfg_scale = 1.0;

    const std::uint64_t eval_seed = cfg.seed ^ 0x5EEDBA5EULL;
    EvalResult cached;
    auto eval_now = [&](int iter) {
        cached = evaluate_ar(policy, env, cfg.sampler, cfg.weights, cfg.eval_samples, eval_seed,
                             cfg.ema_eps_var);
        run_eval_hook(hooks, out.evals, iter, cached);
    };

    eval_now(0);
    try {
        for (int iter = 0; iter < cfg.iterations; ++iter) {
            const auto t0 = Clock::now();
            Rng rng(cfg.seed, 1 + static_cast<std::uint64_t>(iter));
            ArGrads grads = ArGrads::zeros_like(policy);
            double loss = 0.0;
            const int b = cfg.mle.batch_size;
            for (int j = 0; j < b; ++j) {
                const CorpusSeq& seq = env.corpus[rng.uniform_int(static_cast<int>(env.corpus.size()))];
                const ArScore score = ar_logprob(policy, seq.tokens, seq.cls, neutral);
                loss += -mean(score.logps) / b;
                ar_score_backward(policy, seq.tokens, seq.cls, neutral, -1.0 / b, 0.0, grads);
            }
            ensure_finite(loss, "mle loss");
            Vec64 flat_p = ar_flatten(policy);
            clip_and_step(flat_p, ar_flatten_grads(grads), cfg.learning_rate, cfg.grad_clip_norm);
            ar_unflatten(policy, flat_p);
            ++update_count;

            const int done = iter + 1;
            if (done % cfg.eval_interval == 0 || done == cfg.iterations) eval_now(done);

            TrainingRecord rec;
            rec.iter = iter;
            rec.loss = loss;
            rec.reward_mean = cached.reward_mean;
            rec.reward_align = cached.reward_align;
            rec.reward_pref = cached.reward_pref;
            rec.ema_fid = cached.fid;
            rec.entropy_mean = cached.entropy_mean;
            rec.entropy_frac = cached.entropy_frac;
            rec.ms = ms_since(t0);
            out.records.push_back(rec);
            if (hooks.on_record) hooks.on_record(rec);
            if (cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0 &&
                hooks.on_checkpoint)
                hooks.on_checkpoint(done, ar_policy_to_json(policy));
        }
    } catch (const std::runtime_error& e) {
        if (hooks.on_checkpoint) hooks.on_checkpoint(-1, ar_policy_to_json(policy));
        throw NumericalAbort(std::string("mle run aborted: ") + e.what());
    }

    out.final_checkpoint = ar_policy_to_json(policy);
    out.summary = {{"env", "ar"},
                   {"mode", "mle"},
                   {"seed", cfg.seed},
                   {"iterations", cfg.iterations},
                   {"updates", update_count},
                   {"fid_initial", out.evals.front().metrics.fid},
                   {"fid_final", out.evals.back().metrics.fid},
                   {"reward_final", out.evals.back().metrics.reward_mean}};
    return out;
}

}  // namespace distlab
