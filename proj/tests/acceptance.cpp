// Acceptance suite: one pass/fail line per criterion, exit 0 iff all pass.
//
// 1. leave-one-out reward oracle equivalence (batch and EMA forms)
// 2. gradient fidelity against central finite differences
// 3. 2D line-matching convergence without spread collapse
// 4. closed-loop entropy control on a 600-iteration token run
// 5. training-dynamics directionality (reward up, EMA distance down)
// 6. policy-gradient training beats cross-entropy continuation on eval FID
// 7. one full iteration matches a straight-line scripted reimplementation
// 8. bit-identical metrics across re-runs with the same config and seed

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "ar_oracle.hpp"
#include "distlab/checks.hpp"
#include "distlab/config.hpp"
#include "distlab/io.hpp"
#include "distlab/trainer.hpp"

using namespace distlab;

namespace {

using Clock = std::chrono::steady_clock;

struct Criterion {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

std::vector<Criterion> g_results;

template <typename Fn>
void run_criterion(const std::string& name, double budget_s, Fn fn) {
    Criterion c;
    c.name = name;
    const auto t0 = Clock::now();
    try {
        c.pass = fn(c.detail);
    } catch (const std::exception& e) {
        c.pass = false;
        c.detail = std::string("exception: ") + e.what();
    }
    c.seconds =
        std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count() / 1000.0;
    if (budget_s > 0.0 && c.seconds >= budget_s) {
        c.pass = false;
        c.detail += " [over runtime budget " + std::to_string(int(budget_s)) + "s]";
    }
    std::printf("[%s] %-52s %7.1fs  %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.seconds,
                c.detail.c_str());
    std::fflush(stdout);
    g_results.push_back(std::move(c));
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

ExperimentConfig load_config(const std::string& name) {
    return config_from_json(load_config_file(std::string(DISTLAB_CONFIG_DIR) + "/" + name));
}

double smoothed(const std::vector<double>& xs, int i, int w = 50) {
    double acc = 0.0;
    int n = 0;
    for (int j = std::max(0, i - w + 1); j <= i; ++j) {
        acc += xs[j];
        ++n;
    }
    return acc / n;
}

std::vector<double> column(const std::vector<TrainingRecord>& recs,
                           double TrainingRecord::*field) {
    std::vector<double> out;
    out.reserve(recs.size());
    for (const auto& r : recs) out.push_back(r.*field);
    return out;
}

std::string metrics_csv_without_ms(const std::vector<TrainingRecord>& recs) {
    std::string out(kMetricsCsvHeader);
    out += '\n';
    for (const auto& r : recs) {
        std::string line = record_to_csv(r);
        out += line.substr(0, line.rfind(','));
        out += '\n';
    }
    return out;
}

// Shared artifacts across criteria 4-6.
const char* const kWorkDir = "/tmp/distlab_acceptance";
std::string g_pretrain_ckpt;
RunResult g_standard_run;  // configs/ar.json started from the pretrained checkpoint
bool g_standard_ready = false;

void prepare_shared_runs() {
    ExperimentConfig pre = load_config("ar_pretrain.json");
    const RunResult run = train_ar_mle(pre);
    g_pretrain_ckpt = std::string(kWorkDir) + "/pretrain_ckpt.json";
    atomic_write_file(g_pretrain_ckpt, run.final_checkpoint.dump());
    std::printf("       pretrained checkpoint: eval fid %s, entropy fraction %.3f\n",
                fmt(run.evals.back().metrics.fid).c_str(),
                run.evals.back().metrics.entropy_frac);

    ExperimentConfig std_cfg = load_config("ar.json");
    std_cfg.init_checkpoint = g_pretrain_ckpt;
    g_standard_run = train_ar_grpo(std_cfg);
    g_standard_ready = true;
    std::printf("       standard policy run:   eval fid %s -> %s\n",
                fmt(g_standard_run.evals.front().metrics.fid).c_str(),
                fmt(g_standard_run.evals.back().metrics.fid).c_str());
    std::fflush(stdout);
}

}  // namespace

int main() {
    std::filesystem::create_directories(kWorkDir);
    std::printf("acceptance suite (configs: %s)\n", DISTLAB_CONFIG_DIR);
    std::fflush(stdout);

    run_criterion("1. leave-one-out reward oracle equivalence", 30.0, [](std::string& detail) {
        CheckOptions opts;
        const SuiteResult batch = check_loo_batch_oracle(opts);
        const SuiteResult ema = check_ema_loo_oracle(opts);
        detail = "max abs err " + fmt(std::max(batch.max_err, ema.max_err)) +
                 " over 100+100 random instances (tol 1e-10)";
        return batch.pass && ema.pass;
    });

    run_criterion("2. gradient fidelity vs central finite differences", 60.0,
                  [](std::string& detail) {
                      CheckOptions opts;
                      const SuiteResult mlp = check_gradient_mlp(opts);
                      const SuiteResult gauss = check_gradient_gaussian_logprob(opts);
                      const SuiteResult loss = check_gradient_grpo_loss(opts);
                      detail = "max rel err " +
                               fmt(std::max({mlp.max_err, gauss.max_err, loss.max_err})) +
                               " over 300 random configurations (tol 1e-4)";
                      return mlp.pass && gauss.pass && loss.pass;
                  });

    run_criterion("3. 2D line-matching convergence without collapse", 120.0,
                  [](std::string& detail) {
                      const ExperimentConfig cfg = load_config("toy2d.json");
                      const RunResult run = train_toy2d(cfg);
                      const double fid0 = run.evals.front().metrics.fid;
                      const double fid1 = run.evals.back().metrics.fid;
                      const double ratio = fid1 / fid0;

                      // Spread along the line direction, generated vs reference.
                      const Gaussian2dPolicy policy = gaussian2d_from_json(run.final_checkpoint);
                      const FeatureBatch gen = toy2d_sample_batch(policy, 2048, 404, 1);
                      const FeatureBatch ref =
                          line_dataset(cfg.toy2d.ref_samples, cfg.toy2d.ref_seed,
                                       cfg.toy2d.line_noise);
                      const auto diag_std = [](const FeatureBatch& b) {
                          double s1 = 0.0, s2 = 0.0;
                          for (int i = 0; i < b.n; ++i) {
                              const double p = (b.at(i, 0) + b.at(i, 1)) / std::sqrt(2.0);
                              s1 += p;
                              s2 += p * p;
                          }
                          const double m = s1 / b.n;
                          return std::sqrt(std::max(s2 / b.n - m * m, 0.0));
                      };
                      const double spread_ratio = diag_std(gen) / diag_std(ref);
                      detail = "fid " + fmt(fid0) + " -> " + fmt(fid1) + " (ratio " + fmt(ratio) +
                               ", need < 0.05); line-spread ratio " + fmt(spread_ratio) +
                               " (need >= 0.5)";
                      return ratio < 0.05 && spread_ratio >= 0.5;
                  });

    std::printf("       preparing shared token-policy runs...\n");
    std::fflush(stdout);
    prepare_shared_runs();

    run_criterion("4. closed-loop entropy control", 300.0, [](std::string& detail) {
        ExperimentConfig cfg = load_config("ar_entropy.json");
        cfg.init_checkpoint = g_pretrain_ckpt;
        const RunResult run = train_ar_grpo(cfg);
        const double target = run.summary.at("entropy_target").get<double>();
        const std::vector<double> frac = column(run.records, &TrainingRecord::entropy_frac);
        const std::vector<double> ceff = column(run.records, &TrainingRecord::c_eff);

        const int warm = static_cast<int>(cfg.entropy.warmup_end * cfg.iterations);
        const double band = 2.0 * cfg.entropy.deadband;
        int in_band = 0, post = 0;
        for (int i = warm; i < static_cast<int>(frac.size()); ++i) {
            ++post;
            if (std::abs(smoothed(frac, i) - target) <= band) ++in_band;
        }
        const double frac_in = post > 0 ? double(in_band) / post : 0.0;

        // Outside the deadband the effective coefficient must stay clamped.
        bool clamped = true;
        for (std::size_t i = 0; i < frac.size(); ++i) {
            if (std::abs(target - frac[i]) > cfg.entropy.deadband) {
                if (ceff[i] < cfg.entropy.c_min - 1e-15 || ceff[i] > cfg.entropy.c_max + 1e-15)
                    clamped = false;
            }
        }
        detail = "running mean of entropy fraction within target +-2*deadband for " +
                 fmt(100.0 * frac_in) + "% of post-warmup iterations (need >= 80%); c_eff " +
                 std::string(clamped ? "stayed" : "LEFT") + " [c_min, c_max]";
        return frac_in >= 0.80 && clamped;
    });

    run_criterion("5. training-dynamics directionality", 0.0, [](std::string& detail) {
        if (!g_standard_ready) return false;
        const std::vector<double> reward =
            column(g_standard_run.records, &TrainingRecord::reward_mean);
        const std::vector<double> fid = column(g_standard_run.records, &TrainingRecord::ema_fid);
        const double r50 = smoothed(reward, 49), r600 = smoothed(reward, 599);
        const double f50 = smoothed(fid, 49), f600 = smoothed(fid, 599);
        detail = "smoothed reward " + fmt(r50) + " -> " + fmt(r600) + "; smoothed EMA fid " +
                 fmt(f50) + " -> " + fmt(f600);
        return r600 > r50 && f600 < f50;
    });

    run_criterion("6. policy training beats cross-entropy continuation", 0.0,
                  [](std::string& detail) {
                      if (!g_standard_ready) return false;
                      ExperimentConfig mle_cfg = load_config("ar_pretrain.json");
                      mle_cfg.init_checkpoint = g_pretrain_ckpt;
                      mle_cfg.iterations = 600;
                      const RunResult mle600 = train_ar_mle(mle_cfg);
                      mle_cfg.iterations = 5000;
                      const RunResult mle5000 = train_ar_mle(mle_cfg);
                      const double fid_grpo = g_standard_run.evals.back().metrics.fid;
                      const double fid_600 = mle600.evals.back().metrics.fid;
                      const double fid_5000 = mle5000.evals.back().metrics.fid;
                      detail = "eval fid: policy(600) " + fmt(fid_grpo) + " vs mle(600) " +
                               fmt(fid_600) + " vs mle(5000) " + fmt(fid_5000);
                      return fid_grpo < fid_600 && fid_grpo < fid_5000;
                  });

    run_criterion("7. single-iteration straight-line oracle", 0.0, [](std::string& detail) {
        const ExperimentConfig cfg = distlab_test::micro_config();
        const ArEnv env = ArEnv::create(cfg.ar);
        ArTrainState st = distlab_test::micro_state(cfg);
        ArIterationCapture cap;
        const TrainingRecord rec = ar_grpo_iteration(st, env, cfg, 0, 0.78, &cap);
        const distlab_test::OracleIteration oracle =
            distlab_test::oracle_iteration(cfg, env, cap, 0.78);
        const double loss_err = std::abs(rec.loss - oracle.loss);
        double delta_err = 0.0;
        for (std::size_t i = 0; i < cap.params_before.size(); ++i) {
            const double got = cap.params_after[i] - cap.params_before[i];
            delta_err = std::max(delta_err, std::abs(got - oracle.delta[i]));
        }
        detail = "loss err " + fmt(loss_err) + ", max param-delta err " + fmt(delta_err) +
                 " (tol 1e-10)";
        return loss_err < 1e-10 && delta_err < 1e-10;
    });

    run_criterion("8. bit-identical metrics across re-runs", 0.0, [](std::string& detail) {
        ExperimentConfig toy = load_config("toy2d.json");
        toy.iterations = 25;
        toy.eval_samples = 256;
        toy.toy2d.ref_samples = 2048;
        const std::string t1 = metrics_csv_without_ms(train_toy2d(toy).records);
        const std::string t2 = metrics_csv_without_ms(train_toy2d(toy).records);

        ExperimentConfig ar = load_config("ar.json");
        ar.init_checkpoint = g_pretrain_ckpt;
        ar.iterations = 8;
        ar.eval_interval = 8;
        ar.eval_samples = 64;
        const std::string a1 = metrics_csv_without_ms(train_ar_grpo(ar).records);
        const std::string a2 = metrics_csv_without_ms(train_ar_grpo(ar).records);

        const bool same = t1 == t2 && a1 == a2;
        detail = std::string(same ? "toy2d and token runs byte-identical"
                                  : "re-run produced different metrics") +
                 " (wall-clock column excluded)";
        return same;
    });

    int failures = 0;
    for (const Criterion& c : g_results)
        if (!c.pass) ++failures;
    std::printf("%d/%zu criteria passed\n", int(g_results.size()) - failures, g_results.size());
    return failures == 0 ? 0 : 1;
}
