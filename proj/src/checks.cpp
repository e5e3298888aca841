#include "distlab/checks.hpp"

#include <cmath>

#include "distlab/ar_env.hpp"
#include "distlab/ar_model.hpp"
#include "distlab/entropy.hpp"
#include "distlab/gradcheck.hpp"
#include "distlab/grpo.hpp"
#include "distlab/line2d.hpp"
#include "distlab/moments.hpp"
#include "distlab/rng.hpp"

namespace distlab {

namespace {

constexpr double kLooTol = 1e-10;
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-5;

FeatureBatch random_batch(Rng& rng, int n, int d, double scale) {
    FeatureBatch b(n, d);
    for (double& v : b.data) v = scale * rng.normal();
    return b;
}

MomentPair random_reference(Rng& rng, int d) {
    MomentPair ref;
    ref.mu.resize(d);
    ref.sigma.resize(d);
    for (int j = 0; j < d; ++j) {
        ref.mu[j] = rng.normal();
        ref.sigma[j] = 0.2 + std::abs(rng.normal());
    }
    return ref;
}

// Straight-line moments of the rows excluding `skip` (two-pass, no shared sums).
MomentPair naive_subset_moments(const FeatureBatch& batch, int skip, double eps_var) {
    const int m = batch.n - 1;
    MomentPair out;
    out.mu.assign(batch.d, 0.0);
    Vec64 m2(batch.d, 0.0);
    for (int i = 0; i < batch.n; ++i) {
        if (i == skip) continue;
        for (int j = 0; j < batch.d; ++j) {
            out.mu[j] += batch.at(i, j) / m;
            m2[j] += batch.at(i, j) * batch.at(i, j) / m;
        }
    }
    out.sigma.resize(batch.d);
    for (int j = 0; j < batch.d; ++j) {
        const double v = std::max(m2[j] - out.mu[j] * out.mu[j], 0.0);
        out.sigma[j] = std::sqrt(v + eps_var);
    }
    out.m2 = std::move(m2);
    return out;
}

double naive_fid(const MomentPair& a, const MomentPair& b) {
    double acc = 0.0;
    for (int j = 0; j < a.dim(); ++j) {
        acc += (a.mu[j] - b.mu[j]) * (a.mu[j] - b.mu[j]);
        acc += (a.sigma[j] - b.sigma[j]) * (a.sigma[j] - b.sigma[j]);
    }
    return acc;
}

}  // namespace

SuiteResult check_loo_batch_oracle(const CheckOptions& opts) {
    SuiteResult res{"loo_batch_oracle", false, 0.0, kLooTol, ""};
    Rng rng(opts.seed, 1);
    for (int inst = 0; inst < opts.loo_instances; ++inst) {
        const int n = 2 + rng.uniform_int(63);   // [2, 64]
        const int d = 1 + rng.uniform_int(256);  // [1, 256]
        const FeatureBatch batch = random_batch(rng, n, d, 1.0 + rng.uniform());
        const MomentPair ref = random_reference(rng, d);
        Vec64 rewards = loo_batch_rewards(batch, ref, kDefaultEpsVar);
        if (opts.inject_loo_fault && inst == 0) rewards[0] += 1e-6;

        MomentPair full;
        {
            // naive full moments via the same two-pass routine (skip = none)
            FeatureBatch padded(n + 1, d);
            std::copy(batch.data.begin(), batch.data.end(), padded.data.begin());
            full = naive_subset_moments(padded, n, kDefaultEpsVar);
        }
        const double f_batch = naive_fid(ref, full);
        for (int i = 0; i < n; ++i) {
            const double f_i = naive_fid(ref, naive_subset_moments(batch, i, kDefaultEpsVar));
            res.max_err = std::max(res.max_err, std::abs(rewards[i] - (f_i - f_batch)));
        }
    }
    res.pass = res.max_err < kLooTol;
    res.detail = "instances=" + std::to_string(opts.loo_instances);
    return res;
}

SuiteResult check_ema_loo_oracle(const CheckOptions& opts) {
    SuiteResult res{"ema_loo_oracle", false, 0.0, kLooTol, ""};
    Rng rng(opts.seed, 2);
    for (int inst = 0; inst < opts.loo_instances; ++inst) {
        const int n = 2 + rng.uniform_int(63);
        const int d = 1 + rng.uniform_int(256);
        const FeatureBatch batch = random_batch(rng, n, d, 1.0 + rng.uniform());
        const MomentPair ref = random_reference(rng, d);

        EmaMomentState state;
        state.alpha = 0.05 + 0.9 * rng.uniform();
        state.eps_var = kDefaultEpsVar;
        const bool warm = rng.uniform() < 0.8;
        if (warm) {
            state.initialized = true;
            state.mu.resize(d);
            state.m2.resize(d);
            for (int j = 0; j < d; ++j) {
                state.mu[j] = rng.normal();
                state.m2[j] = state.mu[j] * state.mu[j] + 0.1 + rng.uniform();
            }
        }

        const EmaLooResult got = ema_loo_rewards(state, batch, ref);

        // Oracle: N+1 independent EMA updates, each from naive subset moments.
        FeatureBatch padded(n + 1, d);
        std::copy(batch.data.begin(), batch.data.end(), padded.data.begin());
        const MomentPair full = naive_subset_moments(padded, n, kDefaultEpsVar);
        auto naive_ema = [&](const MomentPair& m) {
            EmaMomentState next = state;
            if (!state.initialized) {
                next.mu = m.mu;
                next.m2 = *m.m2;
                next.initialized = true;
            } else {
                for (int j = 0; j < d; ++j) {
                    next.mu[j] = (1.0 - state.alpha) * state.mu[j] + state.alpha * m.mu[j];
                    next.m2[j] = (1.0 - state.alpha) * state.m2[j] + state.alpha * (*m.m2)[j];
                }
            }
            MomentPair mm;
            mm.mu = next.mu;
            mm.sigma.resize(d);
            for (int j = 0; j < d; ++j) {
                const double v = std::max(next.m2[j] - next.mu[j] * next.mu[j], 0.0);
                mm.sigma[j] = std::sqrt(v + state.eps_var);
            }
            return mm;
        };
        const double f_full = naive_fid(ref, naive_ema(full));
        res.max_err = std::max(res.max_err, std::abs(got.fid_full - f_full));
        for (int i = 0; i < n; ++i) {
            const double f_i =
                naive_fid(ref, naive_ema(naive_subset_moments(batch, i, kDefaultEpsVar)));
            res.max_err = std::max(res.max_err, std::abs(got.rewards[i] - (f_i - f_full)));
        }
    }
    res.pass = res.max_err < kLooTol;
    res.detail = "instances=" + std::to_string(opts.loo_instances);
    return res;
}

SuiteResult check_gradient_mlp(const CheckOptions& opts) {
    SuiteResult res{"gradient_mlp", false, 0.0, kGradTol, ""};
    Rng rng(opts.seed, 3);
    for (int inst = 0; inst < opts.gradient_configs; ++inst) {
        const int n_in = 1 + rng.uniform_int(8);
        const int n_hidden = 1 + rng.uniform_int(16);
        const int n_out = 1 + rng.uniform_int(6);
        std::vector<int> sizes = {n_in, n_hidden, n_out};
        if (rng.uniform() < 0.3) sizes.insert(sizes.begin() + 2, 1 + rng.uniform_int(12));
        MlpParams net = mlp_init(sizes, rng);

        Vec64 input(n_in);
        for (double& v : input) v = rng.normal();
        Vec64 probe(n_out);
        for (double& v : probe) v = rng.normal();

        // Scalar objective: probe . forward(x); analytic gradient via backward.
        MlpCache cache;
        mlp_forward_cached(net, input, cache);
        MlpGrads grads = MlpGrads::zeros_like(net);
        mlp_backward(net, cache, probe, grads);
        Vec64 analytic;
        mlp_flatten_grads(grads, analytic);

        Vec64 flat;
        mlp_flatten(net, flat);
        MlpParams scratch = net;
        const auto f = [&](const Vec64& theta) {
            std::size_t cursor = 0;
            mlp_unflatten(scratch, theta, cursor);
            return dot(probe, mlp_forward(scratch, input));
        };
        res.max_err = std::max(res.max_err, finite_diff_check(f, flat, analytic, kGradStep));
    }
    res.pass = res.max_err < kGradTol;
    res.detail = "configs=" + std::to_string(opts.gradient_configs);
    return res;
}

SuiteResult check_gradient_gaussian_logprob(const CheckOptions& opts) {
    SuiteResult res{"gradient_gaussian_logprob", false, 0.0, kGradTol, ""};
    Rng rng(opts.seed, 4);
    for (int inst = 0; inst < opts.gradient_configs; ++inst) {
        const int latent = 1 + rng.uniform_int(6);
        const int hidden = 2 + rng.uniform_int(12);
        Gaussian2dPolicy policy;
        policy.latent_dim = latent;
        policy.net = mlp_init({latent, hidden, 4}, rng);
        Vec64 z(latent);
        for (double& v : z) v = rng.normal();
        const Vec64 x = {rng.normal(), rng.normal()};

        MlpGrads grads = MlpGrads::zeros_like(policy.net);
        gaussian_logprob_backward(policy, z, x, 1.0, grads);
        Vec64 analytic;
        mlp_flatten_grads(grads, analytic);

        Vec64 flat;
        mlp_flatten(policy.net, flat);
        Gaussian2dPolicy scratch = policy;
        const auto f = [&](const Vec64& theta) {
            std::size_t cursor = 0;
            mlp_unflatten(scratch.net, theta, cursor);
            return gaussian_logprob(scratch, z, x);
        };
        res.max_err = std::max(res.max_err, finite_diff_check(f, flat, analytic, kGradStep));
    }
    res.pass = res.max_err < kGradTol;
    res.detail = "configs=" + std::to_string(opts.gradient_configs);
    return res;
}

namespace {

// Keeps the probability ratio away from the clip-boundary kinks so central
// differences see a single smooth branch.
void keep_off_clip_boundary(double& old_logp, double lbar_new, double clip_eps, double scale) {
    const double margin = 1e-3;
    for (int guard = 0; guard < 8; ++guard) {
        const double d = scale * (lbar_new - old_logp);
        const double lo = std::log(1.0 - clip_eps);
        const double hi = std::log(1.0 + clip_eps);
        if (std::abs(d - lo) >= margin && std::abs(d - hi) >= margin) return;
        old_logp += 4.0 * margin / scale;
    }
}

}  // namespace

SuiteResult check_gradient_grpo_loss(const CheckOptions& opts) {
    SuiteResult res{"gradient_grpo_loss", false, 0.0, kGradTol, ""};
    Rng rng(opts.seed, 5);
    const int per_kind = opts.gradient_configs / 2;

    // Continuous policy: GRPO loss on a fixed batch of (z, x) pairs.
    for (int inst = 0; inst < per_kind; ++inst) {
        const int latent = 1 + rng.uniform_int(4);
        Gaussian2dPolicy policy;
        policy.latent_dim = latent;
        policy.net = mlp_init({latent, 2 + rng.uniform_int(8), 4}, rng);

        GrpoConfig gcfg;
        gcfg.clip_eps = 0.2;
        gcfg.kl_beta = rng.uniform() < 0.5 ? 0.0 : 0.7;
        const int g = 4;
        std::vector<Vec64> zs(g), xs(g);
        Vec64 rewards(g), old_logps(g), ref_logps(g);
        for (int j = 0; j < g; ++j) {
            zs[j].resize(latent);
            for (double& v : zs[j]) v = rng.normal();
            xs[j] = {rng.normal(), rng.normal()};
            rewards[j] = rng.normal();
            // Old/ref log-probs as nearby values so both clip branches get
            // exercised across instances.
            const double lbar = gaussian_logprob(policy, zs[j], xs[j]);
            old_logps[j] = lbar + 0.2 * rng.normal();
            ref_logps[j] = lbar + 0.2 * rng.normal();
            keep_off_clip_boundary(old_logps[j], lbar, gcfg.clip_eps, 1.0);
        }
        const Vec64 adv = group_advantages(rewards, gcfg.adv_eps);

        Gaussian2dPolicy scratch = policy;
        const auto loss_at = [&](const Vec64& theta) {
            std::size_t cursor = 0;
            mlp_unflatten(scratch.net, theta, cursor);
            GroupBatch gb;
            gb.samples.resize(g);
            for (int j = 0; j < g; ++j) {
                gb.samples[j].reward = rewards[j];
                gb.samples[j].mean_logp_old = old_logps[j];
                gb.samples[j].logps_new = {gaussian_logprob(scratch, zs[j], xs[j])};
                gb.samples[j].mean_logp_ref = ref_logps[j];
                gb.samples[j].has_ref = gcfg.kl_beta > 0.0;
            }
            return grpo_loss(gb, adv, gcfg, 0.0).loss;
        };

        GroupBatch gb;
        gb.samples.resize(g);
        for (int j = 0; j < g; ++j) {
            gb.samples[j].reward = rewards[j];
            gb.samples[j].mean_logp_old = old_logps[j];
            gb.samples[j].logps_new = {gaussian_logprob(policy, zs[j], xs[j])};
            gb.samples[j].mean_logp_ref = ref_logps[j];
            gb.samples[j].has_ref = gcfg.kl_beta > 0.0;
        }
        const GrpoLossResult lr = grpo_loss(gb, adv, gcfg, 0.0);
        MlpGrads grads = MlpGrads::zeros_like(policy.net);
        for (int j = 0; j < g; ++j)
            gaussian_logprob_backward(policy, zs[j], xs[j], lr.d_mean_logp[j], grads);
        Vec64 analytic;
        mlp_flatten_grads(grads, analytic);
        Vec64 flat;
        mlp_flatten(policy.net, flat);
        res.max_err = std::max(res.max_err, finite_diff_check(loss_at, flat, analytic, kGradStep));
    }

    // Discrete policy: full loss including the entropy bonus and KL anchor.
    for (int inst = 0; inst < opts.gradient_configs - per_kind; ++inst) {
        const int vocab = 4 + rng.uniform_int(5);
        const int seq_len = 3 + rng.uniform_int(4);
        const int classes = 2 + rng.uniform_int(3);
        Rng init(opts.seed, 100 + inst);
        DiscreteArPolicy policy =
            DiscreteArPolicy::init(vocab, seq_len, classes, 2, 3, 3, 6, init);
        DiscreteArPolicy ref_policy =
            DiscreteArPolicy::init(vocab, seq_len, classes, 2, 3, 3, 6, init);

        SamplerConfig sampler;
        sampler.cfg_scale = rng.uniform() < 0.5 ? 1.0 : 1.5;
        GrpoConfig gcfg;
        gcfg.kl_beta = rng.uniform() < 0.5 ? 0.0 : 1.3;
        const double ceff = 2.2e-3;

        const int g = 4;
        std::vector<RolloutSample> rollouts;
        Vec64 rewards(g);
        for (int j = 0; j < g; ++j) {
            Rng sample_rng(opts.seed, 500 + inst * 31 + j);
            rollouts.push_back(ar_sample(policy, j % classes, sampler, sample_rng));
            rewards[j] = rng.normal();
        }
        const Vec64 adv = group_advantages(rewards, gcfg.adv_eps);
        Vec64 old_logps(g), ref_logps(g);
        for (int j = 0; j < g; ++j) {
            const double lbar = mean(rollouts[j].logps);
            old_logps[j] = lbar + 0.1 * rng.normal();
            keep_off_clip_boundary(old_logps[j], lbar, gcfg.clip_eps, 1.0);
            ref_logps[j] =
                mean(ar_logprob(ref_policy, rollouts[j].tokens, rollouts[j].cls, sampler).logps);
        }

        DiscreteArPolicy scratch = policy;
        const auto loss_at = [&](const Vec64& theta) {
            ar_unflatten(scratch, theta);
            GroupBatch gb;
            gb.samples.resize(g);
            for (int j = 0; j < g; ++j) {
                const ArScore score =
                    ar_logprob(scratch, rollouts[j].tokens, rollouts[j].cls, sampler);
                gb.samples[j].reward = rewards[j];
                gb.samples[j].mean_logp_old = old_logps[j];
                gb.samples[j].logps_new = score.logps;
                gb.samples[j].entropies = score.entropies;
                gb.samples[j].mean_logp_ref = ref_logps[j];
                gb.samples[j].has_ref = gcfg.kl_beta > 0.0;
            }
            return grpo_loss(gb, adv, gcfg, ceff).loss;
        };

        GroupBatch gb;
        gb.samples.resize(g);
        for (int j = 0; j < g; ++j) {
            const ArScore score = ar_logprob(policy, rollouts[j].tokens, rollouts[j].cls, sampler);
            gb.samples[j].reward = rewards[j];
            gb.samples[j].mean_logp_old = old_logps[j];
            gb.samples[j].logps_new = score.logps;
            gb.samples[j].entropies = score.entropies;
            gb.samples[j].mean_logp_ref = ref_logps[j];
            gb.samples[j].has_ref = gcfg.kl_beta > 0.0;
        }
        const GrpoLossResult lr = grpo_loss(gb, adv, gcfg, ceff);
        ArGrads grads = ArGrads::zeros_like(policy);
        for (int j = 0; j < g; ++j) {
            ar_score_backward(policy, rollouts[j].tokens, rollouts[j].cls, sampler,
                              lr.d_mean_logp[j], lr.d_mean_entropy[j], grads);
        }
        const Vec64 analytic = ar_flatten_grads(grads);
        const Vec64 flat = ar_flatten(policy);
        res.max_err = std::max(res.max_err, finite_diff_check(loss_at, flat, analytic, kGradStep));
    }

    res.pass = res.max_err < kGradTol;
    res.detail = "configs=" + std::to_string(opts.gradient_configs);
    return res;
}

SuiteResult check_entropy_controller(const CheckOptions& opts) {
    SuiteResult res{"entropy_controller", false, 0.0, 0.0, ""};
    EntropyConfig cfg;
    Rng rng(opts.seed, 6);
    bool ok = true;
    std::string why;

    // Continuity at the two schedule breakpoints.
    for (double bp : {cfg.warmup_end, cfg.flat_end}) {
        const double lo = c_sched(std::nextafter(bp, 0.0), cfg);
        const double hi = c_sched(std::nextafter(bp, 1.0), cfg);
        const double jump = std::abs(hi - lo);
        res.max_err = std::max(res.max_err, jump);
        if (jump > 1e-12) {
            ok = false;
            why = "schedule discontinuity";
        }
    }
    // Clamp bounds outside the deadband, monotone response in h_hat.
    for (int i = 0; i < 4000 && ok; ++i) {
        const double p = rng.uniform();
        const double h1 = rng.uniform();
        const double h2 = rng.uniform();
        const double c1 = c_eff(p, h1, cfg);
        if (std::abs(cfg.target - h1) > cfg.deadband &&
            (c1 < cfg.c_min - 1e-15 || c1 > cfg.c_max + 1e-15)) {
            ok = false;
            why = "c_eff escaped [c_min, c_max]";
        }
        const double c2 = c_eff(p, h2, cfg);
        const bool outside = std::abs(cfg.target - h1) > cfg.deadband &&
                             std::abs(cfg.target - h2) > cfg.deadband;
        if (outside && h1 < h2 && c1 < c2 - 1e-15) {
            ok = false;
            why = "response not monotone in entropy";
        }
    }
    // Deadband returns the schedule untouched.
    for (int i = 0; i < 100 && ok; ++i) {
        const double p = rng.uniform();
        const double h = cfg.target + cfg.deadband * (2.0 * rng.uniform() - 1.0);
        if (c_eff(p, h, cfg) != c_sched(p, cfg)) {
            ok = false;
            why = "deadband modified the schedule";
        }
    }
    res.pass = ok;
    res.detail = ok ? "schedule+feedback properties" : why;
    return res;
}

std::vector<SuiteResult> run_all_checks(const CheckOptions& opts) {
    return {check_loo_batch_oracle(opts),      check_ema_loo_oracle(opts),
            check_gradient_mlp(opts),          check_gradient_gaussian_logprob(opts),
            check_gradient_grpo_loss(opts),    check_entropy_controller(opts)};
}

nlohmann::json checks_to_json(const std::vector<SuiteResult>& results) {
    nlohmann::json doc = nlohmann::json::array();
    for (const SuiteResult& r : results) {
        doc.push_back({{"name", r.name},
                       {"pass", r.pass},
                       {"max_err", r.max_err},
                       {"tolerance", r.tolerance},
                       {"detail", r.detail}});
    }
    return doc;
}

}  // namespace distlab
