#include "distlab/config.hpp"

#include <fstream>

namespace distlab {

namespace {

void reject_unknown_keys(const nlohmann::json& doc, const nlohmann::json& schema,
                         const std::string& prefix) {
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!schema.contains(it.key())) throw ConfigError("unknown config key: " + path);
        if (it->is_object()) {
            if (!schema.at(it.key()).is_object())
                throw ConfigError("config key is not a section: " + path);
            reject_unknown_keys(*it, schema.at(it.key()), path);
        }
    }
}

// Deep merge of `patch` onto `base`; scalars and arrays replace, objects merge.
void merge_into(nlohmann::json& base, const nlohmann::json& patch) {
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        if (it->is_object() && base.contains(it.key()) && base.at(it.key()).is_object()) {
            merge_into(base.at(it.key()), *it);
        } else {
            base[it.key()] = *it;
        }
    }
}

template <typename T>
T get(const nlohmann::json& doc, const std::string& key) {
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad value for config key '" + key + "': " + e.what());
    }
}

}  // namespace

nlohmann::json default_config_json() {
    const ExperimentConfig defaults;
    return config_to_json(defaults);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json doc;
    doc["env"] = cfg.env;
    doc["seed"] = cfg.seed;
    doc["iterations"] = cfg.iterations;
    doc["learning_rate"] = cfg.learning_rate;
    doc["grad_clip_norm"] = cfg.grad_clip_norm;
    doc["ema_alpha"] = cfg.ema_alpha;
    doc["ema_eps_var"] = cfg.ema_eps_var;
    doc["eval_interval"] = cfg.eval_interval;
    doc["eval_samples"] = cfg.eval_samples;
    doc["checkpoint_interval"] = cfg.checkpoint_interval;
    doc["init_checkpoint"] = cfg.init_checkpoint;
    doc["out_dir"] = cfg.out_dir;
    doc["grpo"] = {{"group_size", cfg.grpo.group_size},
                   {"epochs", cfg.grpo.epochs},
                   {"clip_eps", cfg.grpo.clip_eps},
                   {"kl_beta", cfg.grpo.kl_beta},
                   {"adv_eps", cfg.grpo.adv_eps},
                   {"ratio_mode",
                    cfg.grpo.ratio_mode == RatioMode::TokenProduct ? "product" : "mean"}};
    doc["entropy"] = {{"enabled", cfg.entropy_enabled},
                      {"calibrate_target", cfg.entropy_calibrate},
                      {"target", cfg.entropy.target},
                      {"deadband", cfg.entropy.deadband},
                      {"gain", cfg.entropy.gain},
                      {"c0", cfg.entropy.c0},
                      {"c_min", cfg.entropy.c_min},
                      {"c_max", cfg.entropy.c_max},
                      {"warmup_end", cfg.entropy.warmup_end},
                      {"flat_end", cfg.entropy.flat_end}};
    doc["sampler"] = {{"temperature", cfg.sampler.temperature},
                      {"top_k", cfg.sampler.top_k},
                      {"top_p", cfg.sampler.top_p},
                      {"cfg_scale", cfg.sampler.cfg_scale},
                      {"greedy", cfg.sampler.greedy}};
    doc["reward_weights"] = {{"align", cfg.weights.align},
                             {"pref", cfg.weights.pref},
                             {"dist", cfg.weights.dist}};
    doc["toy2d"] = {{"latent_dim", cfg.toy2d.latent_dim},
                    {"hidden", cfg.toy2d.hidden},
                    {"pathwise", cfg.toy2d.pathwise},
                    {"line_noise", cfg.toy2d.line_noise},
                    {"ref_samples", cfg.toy2d.ref_samples},
                    {"ref_seed", cfg.toy2d.ref_seed}};
    doc["ar"] = {{"vocab", cfg.ar.vocab},
                 {"seq_len", cfg.ar.seq_len},
                 {"classes", cfg.ar.n_classes},
                 {"hist_window", cfg.ar.hist_window},
                 {"feature_dim", cfg.ar.feature_dim},
                 {"hidden", cfg.ar.hidden},
                 {"class_emb_dim", cfg.ar.class_emb_dim},
                 {"tok_emb_dim", cfg.ar.tok_emb_dim},
                 {"corpus_per_class", cfg.ar.corpus_per_class},
                 {"corpus_noise", cfg.ar.corpus_noise},
                 {"corpus_seed", cfg.ar.corpus_seed},
                 {"feature_seed", cfg.ar.feature_seed}};
    doc["mle"] = {{"batch_size", cfg.mle.batch_size}};
    return doc;
}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
    nlohmann::json merged = default_config_json();
    reject_unknown_keys(doc, merged, "");
    merge_into(merged, doc);

    ExperimentConfig cfg;
    cfg.env = get<std::string>(merged, "env");
    cfg.seed = get<std::uint64_t>(merged, "seed");
    cfg.iterations = get<int>(merged, "iterations");
    cfg.learning_rate = get<double>(merged, "learning_rate");
    cfg.grad_clip_norm = get<double>(merged, "grad_clip_norm");
    cfg.ema_alpha = get<double>(merged, "ema_alpha");
    cfg.ema_eps_var = get<double>(merged, "ema_eps_var");
    cfg.eval_interval = get<int>(merged, "eval_interval");
    cfg.eval_samples = get<int>(merged, "eval_samples");
    cfg.checkpoint_interval = get<int>(merged, "checkpoint_interval");
    cfg.init_checkpoint = get<std::string>(merged, "init_checkpoint");
    cfg.out_dir = get<std::string>(merged, "out_dir");

    const nlohmann::json& jg = merged.at("grpo");
    cfg.grpo.group_size = get<int>(jg, "group_size");
    cfg.grpo.epochs = get<int>(jg, "epochs");
    cfg.grpo.clip_eps = get<double>(jg, "clip_eps");
    cfg.grpo.kl_beta = get<double>(jg, "kl_beta");
    cfg.grpo.adv_eps = get<double>(jg, "adv_eps");
    const std::string ratio_mode = get<std::string>(jg, "ratio_mode");
    if (ratio_mode == "mean")
        cfg.grpo.ratio_mode = RatioMode::MeanLogProb;
    else if (ratio_mode == "product")
        cfg.grpo.ratio_mode = RatioMode::TokenProduct;
    else
        throw ConfigError("grpo.ratio_mode must be 'mean' or 'product'");

    const nlohmann::json& je = merged.at("entropy");
    cfg.entropy_enabled = get<bool>(je, "enabled");
    cfg.entropy_calibrate = get<bool>(je, "calibrate_target");
    cfg.entropy.target = get<double>(je, "target");
    cfg.entropy.deadband = get<double>(je, "deadband");
    cfg.entropy.gain = get<double>(je, "gain");
    cfg.entropy.c0 = get<double>(je, "c0");
    cfg.entropy.c_min = get<double>(je, "c_min");
    cfg.entropy.c_max = get<double>(je, "c_max");
    cfg.entropy.warmup_end = get<double>(je, "warmup_end");
    cfg.entropy.flat_end = get<double>(je, "flat_end");

    const nlohmann::json& js = merged.at("sampler");
    cfg.sampler.temperature = get<double>(js, "temperature");
    cfg.sampler.top_k = get<int>(js, "top_k");
    cfg.sampler.top_p = get<double>(js, "top_p");
    cfg.sampler.cfg_scale = get<double>(js, "cfg_scale");
    cfg.sampler.greedy = get<bool>(js, "greedy");

    const nlohmann::json& jw = merged.at("reward_weights");
    cfg.weights.align = get<double>(jw, "align");
    cfg.weights.pref = get<double>(jw, "pref");
    cfg.weights.dist = get<double>(jw, "dist");

    const nlohmann::json& jt = merged.at("toy2d");
    cfg.toy2d.latent_dim = get<int>(jt, "latent_dim");
    cfg.toy2d.hidden = get<int>(jt, "hidden");
    cfg.toy2d.pathwise = get<bool>(jt, "pathwise");
    cfg.toy2d.line_noise = get<double>(jt, "line_noise");
    cfg.toy2d.ref_samples = get<int>(jt, "ref_samples");
    cfg.toy2d.ref_seed = get<std::uint64_t>(jt, "ref_seed");

    const nlohmann::json& ja = merged.at("ar");
    cfg.ar.vocab = get<int>(ja, "vocab");
    cfg.ar.seq_len = get<int>(ja, "seq_len");
    cfg.ar.n_classes = get<int>(ja, "classes");
    cfg.ar.hist_window = get<int>(ja, "hist_window");
    cfg.ar.feature_dim = get<int>(ja, "feature_dim");
    cfg.ar.hidden = get<int>(ja, "hidden");
    cfg.ar.class_emb_dim = get<int>(ja, "class_emb_dim");
    cfg.ar.tok_emb_dim = get<int>(ja, "tok_emb_dim");
    cfg.ar.corpus_per_class = get<int>(ja, "corpus_per_class");
    cfg.ar.corpus_noise = get<double>(ja, "corpus_noise");
    cfg.ar.corpus_seed = get<std::uint64_t>(ja, "corpus_seed");
    cfg.ar.feature_seed = get<std::uint64_t>(ja, "feature_seed");

    cfg.mle.batch_size = get<int>(merged.at("mle"), "batch_size");

    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    return cfg;
}

nlohmann::json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        nlohmann::json doc;
        in >> doc;
        return doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse config file " + path + ": " + e.what());
    }
}

void apply_override(nlohmann::json& doc, const std::string& dotted_key,
                    const std::string& value) {
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
        parsed = value;  // bare strings like env names
    }
    nlohmann::json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted_key.find('.', start);
        const std::string part = dotted_key.substr(start, dot - start);
        if (part.empty()) throw ConfigError("bad override key: " + dotted_key);
        if (dot == std::string::npos) {
            (*node)[part] = parsed;
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

bool config_has_key(const nlohmann::json& doc, const std::string& dotted_key) {
    const nlohmann::json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted_key.find('.', start);
        const std::string part = dotted_key.substr(start, dot - start);
        if (!node->is_object() || !node->contains(part)) return false;
        if (dot == std::string::npos) return true;
        node = &node->at(part);
        start = dot + 1;
    }
}

}  // namespace distlab
