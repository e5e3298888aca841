#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "distlab/checks.hpp"
#include "distlab/config.hpp"
#include "distlab/io.hpp"
#include "distlab/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitCheckFailed = 3;

struct RunFlags {
    std::string config_path;
    std::string out_dir;
    int iterations = -1;
    std::string seed;  // kept textual so "unset" is distinguishable
    double cfg_scale = -1.0;
    std::vector<std::string> extras;
};

void add_run_flags(CLI::App* cmd, RunFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON config file")->required();
    cmd->add_option("--out", flags.out_dir, "output directory (overrides config out_dir)");
    cmd->add_option("--iterations", flags.iterations, "iteration count override");
    cmd->add_option("--seed", flags.seed, "seed override");
    cmd->add_option("--cfg-scale", flags.cfg_scale, "guidance scale override");
    cmd->allow_extras();
}

// Leftover "--key.path value" (or "--key.path=value") pairs become dotted
// config overrides.
void apply_dotted_extras(nlohmann::json& doc, const std::vector<std::string>& extras) {
    for (std::size_t i = 0; i < extras.size(); ++i) {
        std::string key = extras[i];
        if (key.rfind("--", 0) != 0)
            throw distlab::ConfigError("unexpected argument: " + key);
        key = key.substr(2);
        std::string value;
        const std::size_t eq = key.find('=');
        if (eq != std::string::npos) {
            value = key.substr(eq + 1);
            key = key.substr(0, eq);
        } else {
            if (i + 1 >= extras.size())
                throw distlab::ConfigError("missing value for override --" + key);
            value = extras[++i];
        }
        distlab::apply_override(doc, key, value);
    }
}

nlohmann::json build_config_doc(const RunFlags& flags, const std::string& forced_env) {
    nlohmann::json doc = distlab::load_config_file(flags.config_path);
    apply_dotted_extras(doc, flags.extras);
    // Dedicated flags win over both the file and dotted overrides.
    if (flags.iterations >= 0) doc["iterations"] = flags.iterations;
    if (!flags.seed.empty()) distlab::apply_override(doc, "seed", flags.seed);
    if (flags.cfg_scale >= 0.0) doc["sampler"]["cfg_scale"] = flags.cfg_scale;
    if (!flags.out_dir.empty()) doc["out_dir"] = flags.out_dir;
    if (!forced_env.empty()) doc["env"] = forced_env;
    // Seed fallback of last resort: used only when neither a flag nor the
    // config file pinned one.
    if (flags.seed.empty() && !distlab::config_has_key(doc, "seed")) {
        if (const char* env_seed = std::getenv("DISTLAB_SEED"))
            distlab::apply_override(doc, "seed", env_seed);
    }
    return doc;
}

// File sinks shared by the run commands.
struct RunSinks {
    std::unique_ptr<distlab::CsvWriter> metrics;
    std::unique_ptr<distlab::CsvWriter> evals;
    std::unique_ptr<distlab::CsvWriter> points;
    std::string out_dir;

    distlab::RunHooks hooks(bool with_points) {
        distlab::RunHooks h;
        h.on_record = [this](const distlab::TrainingRecord& rec) {
            metrics->append(distlab::record_to_csv(rec));
        };
        h.on_eval = [this](const distlab::EvalPoint& pt) {
            char buf[256];
            std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g", pt.iter,
                          pt.metrics.fid, pt.metrics.reward_mean, pt.metrics.entropy_mean,
                          pt.metrics.entropy_frac);
            evals->append(buf);
        };
        h.on_checkpoint = [this](int iter, const nlohmann::json& ckpt) {
            const std::string name =
                iter < 0 ? "checkpoint_abort.json" : "checkpoint_iter" + std::to_string(iter) + ".json";
            distlab::atomic_write_file(out_dir + "/" + name, ckpt.dump(2) + "\n");
        };
        if (with_points) {
            h.on_points = [this](int iter, const distlab::FeatureBatch& pts) {
                for (int i = 0; i < pts.n; ++i) {
                    char buf[128];
                    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g", iter, pts.at(i, 0),
                                  pts.at(i, 1));
                    points->append(buf, false);
                }
                points->flush();
            };
        }
        return h;
    }
};

RunSinks make_sinks(const std::string& out_dir, bool with_points) {
    RunSinks sinks;
    sinks.out_dir = out_dir;
    distlab::ensure_dir(out_dir);
    sinks.metrics = std::make_unique<distlab::CsvWriter>(out_dir + "/metrics.csv",
                                                         distlab::kMetricsCsvHeader);
    sinks.evals = std::make_unique<distlab::CsvWriter>(
        out_dir + "/eval.csv", "iter,fid,reward_mean,entropy_mean,entropy_frac");
    if (with_points)
        sinks.points = std::make_unique<distlab::CsvWriter>(out_dir + "/points.csv", "iter,x,y");
    return sinks;
}

int run_experiment(const RunFlags& flags, const std::string& mode) {
    nlohmann::json doc;
    distlab::ExperimentConfig cfg;
    try {
        doc = build_config_doc(flags, mode == "toy2d" ? "toy2d" : "ar");
        cfg = distlab::config_from_json(doc);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    const std::string out_dir = cfg.out_dir.empty() ? "runs/" + mode : cfg.out_dir;
    RunSinks sinks = make_sinks(out_dir, mode == "toy2d");

    try {
        distlab::RunResult result;
        if (mode == "toy2d") {
            result = distlab::train_toy2d(cfg, sinks.hooks(true));
        } else if (mode == "ar") {
            result = distlab::train_ar_grpo(cfg, sinks.hooks(false));
        } else {
            result = distlab::train_ar_mle(cfg, sinks.hooks(false));
        }
        distlab::atomic_write_file(out_dir + "/summary.json", result.summary.dump(2) + "\n");
        distlab::atomic_write_file(out_dir + "/checkpoint_final.json",
                                   result.final_checkpoint.dump(2) + "\n");
        std::cout << result.summary.dump(2) << "\n";
        return kExitOk;
    } catch (const distlab::NumericalAbort& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return kExitNumeric;
    }
}

int run_eval(const RunFlags& flags, const std::string& checkpoint_path) {
    distlab::ExperimentConfig cfg;
    try {
        cfg = distlab::config_from_json(build_config_doc(flags, ""));
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    std::ifstream in(checkpoint_path);
    if (!in) {
        std::cerr << "config error: cannot open checkpoint " << checkpoint_path << "\n";
        return kExitConfig;
    }
    try {
        nlohmann::json ckpt;
        in >> ckpt;
        distlab::EvalResult ev;
        if (ckpt.at("type") == "gaussian2d") {
            const auto policy = distlab::gaussian2d_from_json(ckpt);
            const auto ref_samples = distlab::line_dataset(
                cfg.toy2d.ref_samples, cfg.toy2d.ref_seed, cfg.toy2d.line_noise);
            const auto ref = distlab::reference_moments_from_samples(ref_samples, 0.0);
            ev = distlab::evaluate_toy2d(policy, ref, cfg.eval_samples, cfg.seed, cfg.ema_eps_var);
        } else {
            const auto policy = distlab::ar_policy_from_json(ckpt);
            const auto env = distlab::ArEnv::create(cfg.ar);
            ev = distlab::evaluate_ar(policy, env, cfg.sampler, cfg.weights, cfg.eval_samples,
                                      cfg.seed, cfg.ema_eps_var);
        }
        nlohmann::json out = {{"fid", ev.fid},
                              {"reward_mean", ev.reward_mean},
                              {"reward_align", ev.reward_align},
                              {"reward_pref", ev.reward_pref},
                              {"entropy_mean", ev.entropy_mean},
                              {"entropy_frac", ev.entropy_frac}};
        std::cout << out.dump(2) << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "eval failed: " << e.what() << "\n";
        return kExitNumeric;
    }
}

int run_check(bool report_json, const std::string& inject_fault) {
    distlab::CheckOptions opts;
    if (inject_fault == "loo") {
        opts.inject_loo_fault = true;
    } else if (!inject_fault.empty()) {
        std::cerr << "config error: unknown fault target '" << inject_fault << "'\n";
        return kExitConfig;
    }
    const std::vector<distlab::SuiteResult> results = distlab::run_all_checks(opts);
    bool all_pass = true;
    if (report_json) {
        std::cout << distlab::checks_to_json(results).dump(2) << "\n";
        for (const auto& r : results) all_pass = all_pass && r.pass;
    } else {
        std::printf("%-28s %-6s %-12s %s\n", "suite", "status", "max_err", "detail");
        for (const auto& r : results) {
            std::printf("%-28s %-6s %-12.3g %s\n", r.name.c_str(), r.pass ? "PASS" : "FAIL",
                        r.max_err, r.detail.c_str());
            all_pass = all_pass && r.pass;
        }
    }
    if (!all_pass) {
        for (const auto& r : results)
            if (!r.pass) std::cerr << "check failed: " << r.name << "\n";
        return kExitCheckFailed;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distlab: policy-optimization experiments on toy generative models"};
    app.require_subcommand(1);

    RunFlags toy2d_flags, ar_flags, mle_flags, eval_flags;
    std::string eval_checkpoint;
    bool check_json = false;
    std::string check_fault;

    CLI::App* cmd_toy2d = app.add_subcommand("toy2d", "GRPO on the 2D line-matching policy");
    add_run_flags(cmd_toy2d, toy2d_flags);
    CLI::App* cmd_ar = app.add_subcommand("ar", "GRPO fine-tuning of the token policy");
    add_run_flags(cmd_ar, ar_flags);
    CLI::App* cmd_mle = app.add_subcommand("mle", "cross-entropy baseline training");
    add_run_flags(cmd_mle, mle_flags);
    CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_run_flags(cmd_eval, eval_flags);
    cmd_eval->add_option("--checkpoint", eval_checkpoint, "policy checkpoint")->required();
    CLI::App* cmd_check = app.add_subcommand("check", "run the verification suites");
    std::string report_mode;
    cmd_check->add_option("--report", report_mode, "report format: text|json");
    cmd_check->add_option("--inject-fault", check_fault,
                          "negative control: corrupt one term of the named suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    check_json = report_mode == "json";
    if (!report_mode.empty() && report_mode != "json" && report_mode != "text") {
        std::cerr << "config error: unknown report format '" << report_mode << "'\n";
        return kExitConfig;
    }

    if (cmd_toy2d->parsed()) {
        toy2d_flags.extras = cmd_toy2d->remaining();
        return run_experiment(toy2d_flags, "toy2d");
    }
    if (cmd_ar->parsed()) {
        ar_flags.extras = cmd_ar->remaining();
        return run_experiment(ar_flags, "ar");
    }
    if (cmd_mle->parsed()) {
        mle_flags.extras = cmd_mle->remaining();
        return run_experiment(mle_flags, "mle");
    }
    if (cmd_eval->parsed()) {
        eval_flags.extras = cmd_eval->remaining();
        return run_eval(eval_flags, eval_checkpoint);
    }
    if (cmd_check->parsed()) return run_check(check_json, check_fault);
    return kExitConfig;
}
