#include "distlab/ar_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace distlab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Input layout: [class embedding | hist_window token embeddings, oldest
// first, zero-padded before the sequence start | one-hot position].
Vec64 build_input(const DiscreteArPolicy& policy, int class_row,
                  const std::vector<int>& prefix, int t) {
    Vec64 in(policy.input_dim(), 0.0);
    const int ec = policy.class_emb_dim();
    const int et = policy.tok_emb_dim();
    for (int j = 0; j < ec; ++j) in[j] = policy.class_emb.at(class_row, j);
    for (int k = 0; k < policy.hist_window; ++k) {
        const int src = t - policy.hist_window + k;
        if (src < 0) continue;
        const int tok = prefix[src];
        for (int j = 0; j < et; ++j) in[ec + k * et + j] = policy.tok_emb.at(tok, j);
    }
    in[ec + policy.hist_window * et + t] = 1.0;
    return in;
}

struct StepForward {
    Vec64 logits_eff;
    MlpCache cache_cond;
    MlpCache cache_uncond;
    bool used_uncond = false;
};

StepForward step_forward(const DiscreteArPolicy& policy, int cls,
                         const std::vector<int>& prefix, int t, double cfg_scale) {
    StepForward fw;
    const Vec64 in_cond = build_input(policy, cls, prefix, t);
    const Vec64 logits_cond = mlp_forward_cached(policy.net, in_cond, fw.cache_cond);
    if (cfg_scale == 1.0) {
        fw.logits_eff = logits_cond;
        return fw;
    }
    fw.used_uncond = true;
    const Vec64 in_uncond = build_input(policy, policy.null_class(), prefix, t);
    const Vec64 logits_uncond = mlp_forward_cached(policy.net, in_uncond, fw.cache_uncond);
    fw.logits_eff.resize(logits_cond.size());
    for (std::size_t v = 0; v < logits_cond.size(); ++v)
        fw.logits_eff[v] = logits_uncond[v] + cfg_scale * (logits_cond[v] - logits_uncond[v]);
    return fw;
}

// Truncation support: top-k first, then nucleus, both deterministic under
// ties (higher logit wins, then lower token id). Returns ascending ids.
std::vector<int> truncation_support(const Vec64& scaled_logits, const SamplerConfig& cfg) {
    const int k_vocab = static_cast<int>(scaled_logits.size());
    std::vector<int> order(k_vocab);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scaled_logits[a] != scaled_logits[b]) return scaled_logits[a] > scaled_logits[b];
        return a < b;
    });

    int keep = k_vocab;
    if (cfg.top_k > 0 && cfg.top_k < k_vocab) keep = cfg.top_k;

    if (cfg.top_p < 1.0) {
        // Softmax over the top-k survivors, then the smallest prefix whose
        // cumulative probability reaches top_p.
        double m = scaled_logits[order[0]];
        double z = 0.0;
        for (int i = 0; i < keep; ++i) z += std::exp(scaled_logits[order[i]] - m);
        double cum = 0.0;
        int nucleus = keep;
        for (int i = 0; i < keep; ++i) {
            cum += std::exp(scaled_logits[order[i]] - m) / z;
            if (cum >= cfg.top_p) {
                nucleus = i + 1;
                break;
            }
        }
        keep = nucleus;
    }

    std::vector<int> support(order.begin(), order.begin() + keep);
    std::sort(support.begin(), support.end());
    return support;
}

// Distribution pieces derived from the guided logits.
ArStepDist dist_from_logits(const Vec64& logits_eff, const SamplerConfig& cfg) {
    const int k_vocab = static_cast<int>(logits_eff.size());
    ArStepDist dist;
    dist.entropy_pre = 0.0;
    {
        const Vec64 p = softmax(logits_eff, 1.0);
        for (double pv : p)
            if (pv > 0.0) dist.entropy_pre -= pv * std::log(pv);
    }

    const bool truncate = (cfg.top_k > 0 && cfg.top_k < k_vocab) || cfg.top_p < 1.0;
    dist.log_q.assign(k_vocab, kNegInf);
    if (!truncate) {
        // Bit-exact full softmax path when truncation is disabled.
        dist.support.resize(k_vocab);
        std::iota(dist.support.begin(), dist.support.end(), 0);
        dist.log_q = log_softmax(logits_eff, cfg.temperature);
        return dist;
    }

    Vec64 scaled(logits_eff.size());
    for (std::size_t v = 0; v < scaled.size(); ++v) scaled[v] = logits_eff[v] / cfg.temperature;
    dist.support = truncation_support(scaled, cfg);
    double m = kNegInf;
    for (int v : dist.support) m = std::max(m, scaled[v]);
    double z = 0.0;
    for (int v : dist.support) z += std::exp(scaled[v] - m);
    const double lse = m + std::log(z);
    for (int v : dist.support) dist.log_q[v] = scaled[v] - lse;
    return dist;
}

}  // namespace

void SamplerConfig::validate(int vocab_size) const {
    if (temperature <= 0.0) throw std::invalid_argument("SamplerConfig: temperature must be > 0");
    if (top_k < 0 || top_k > vocab_size)
        throw std::invalid_argument("SamplerConfig: top_k must lie in [0, vocab]");
    if (top_p <= 0.0 || top_p > 1.0)
        throw std::invalid_argument("SamplerConfig: top_p must lie in (0, 1]");
    if (cfg_scale < 0.0) throw std::invalid_argument("SamplerConfig: cfg_scale must be >= 0");
}

DiscreteArPolicy DiscreteArPolicy::init(int vocab, int seq_len, int n_classes, int hist_window,
                                        int class_emb_dim, int tok_emb_dim, int hidden,
                                        Rng& rng) {
    DiscreteArPolicy p;
    p.vocab = vocab;
    p.seq_len = seq_len;
    p.n_classes = n_classes;
    p.hist_window = hist_window;
    const double s_cls = std::sqrt(6.0 / static_cast<double>(n_classes + 1 + class_emb_dim));
    p.class_emb = Mat64(n_classes + 1, class_emb_dim);
    for (double& v : p.class_emb.data) v = rng.uniform(-s_cls, s_cls);
    const double s_tok = std::sqrt(6.0 / static_cast<double>(vocab + tok_emb_dim));
    p.tok_emb = Mat64(vocab, tok_emb_dim);
    for (double& v : p.tok_emb.data) v = rng.uniform(-s_tok, s_tok);
    p.net = mlp_init({p.input_dim(), hidden, vocab}, rng);
    return p;
}

void DiscreteArPolicy::validate() const {
    if (vocab < 2 || seq_len < 1 || n_classes < 1 || hist_window < 1)
        throw std::invalid_argument("DiscreteArPolicy: invalid dimensions");
    if (class_emb.rows != n_classes + 1 || tok_emb.rows != vocab)
        throw std::invalid_argument("DiscreteArPolicy: embedding table shape mismatch");
    net.validate();
    if (net.input_size() != input_dim() || net.output_size() != vocab)
        throw std::invalid_argument("DiscreteArPolicy: net shape mismatch");
}

ArGrads ArGrads::zeros_like(const DiscreteArPolicy& policy) {
    ArGrads g;
    g.class_emb = Mat64(policy.class_emb.rows, policy.class_emb.cols);
    g.tok_emb = Mat64(policy.tok_emb.rows, policy.tok_emb.cols);
    g.net = MlpGrads::zeros_like(policy.net);
    return g;
}

void ArGrads::clear() {
    std::fill(class_emb.data.begin(), class_emb.data.end(), 0.0);
    std::fill(tok_emb.data.begin(), tok_emb.data.end(), 0.0);
    net.clear();
}

ArStepDist ar_step_dist(const DiscreteArPolicy& policy, int cls,
                        const std::vector<int>& prefix, int t, const SamplerConfig& cfg) {
    cfg.validate(policy.vocab);
    if (cls < 0 || cls >= policy.n_classes)
        throw std::invalid_argument("ar_step_dist: class out of range");
    if (t < 0 || t >= policy.seq_len || static_cast<int>(prefix.size()) < t)
        throw std::invalid_argument("ar_step_dist: bad position");

    const StepForward fw = step_forward(policy, cls, prefix, t, cfg.cfg_scale);
    return dist_from_logits(fw.logits_eff, cfg);
}

RolloutSample ar_sample(const DiscreteArPolicy& policy, int cls, const SamplerConfig& cfg,
                        Rng& rng) {
    RolloutSample s;
    s.cls = cls;
    s.tokens.reserve(policy.seq_len);
    s.logps.reserve(policy.seq_len);
    s.entropies.reserve(policy.seq_len);
    for (int t = 0; t < policy.seq_len; ++t) {
        const ArStepDist dist = ar_step_dist(policy, cls, s.tokens, t, cfg);
        int tok;
        if (cfg.greedy) {
            tok = dist.support.front();
            for (int v : dist.support)
                if (dist.log_q[v] > dist.log_q[tok]) tok = v;
        } else {
            const double u = rng.uniform();
            double cum = 0.0;
            tok = dist.support.back();
            for (int v : dist.support) {
                cum += std::exp(dist.log_q[v]);
                if (u < cum) {
                    tok = v;
                    break;
                }
            }
        }
        s.tokens.push_back(tok);
        s.logps.push_back(dist.log_q[tok]);
        s.entropies.push_back(dist.entropy_pre);
    }
    return s;
}

ArScore ar_logprob(const DiscreteArPolicy& policy, const std::vector<int>& tokens, int cls,
                   const SamplerConfig& cfg) {
    if (static_cast<int>(tokens.size()) != policy.seq_len)
        throw std::invalid_argument("ar_logprob: sequence length mismatch");
    ArScore score;
    score.logps.reserve(tokens.size());
    score.entropies.reserve(tokens.size());
    std::vector<int> prefix;
    prefix.reserve(tokens.size());
    for (int t = 0; t < policy.seq_len; ++t) {
        if (tokens[t] < 0 || tokens[t] >= policy.vocab)
            throw std::invalid_argument("ar_logprob: token out of range");
        const ArStepDist dist = ar_step_dist(policy, cls, prefix, t, cfg);
        score.logps.push_back(dist.log_q[tokens[t]]);
        score.entropies.push_back(dist.entropy_pre);
        prefix.push_back(tokens[t]);
    }
    return score;
}

void ar_score_backward(const DiscreteArPolicy& policy, const std::vector<int>& tokens, int cls,
                       const SamplerConfig& cfg, double d_mean_logp, double d_mean_entropy,
                       ArGrads& grads) {
    if (static_cast<int>(tokens.size()) != policy.seq_len)
        throw std::invalid_argument("ar_score_backward: sequence length mismatch");
    cfg.validate(policy.vocab);
    const double inv_t = 1.0 / static_cast<double>(policy.seq_len);
    const int ec = policy.class_emb_dim();
    const int et = policy.tok_emb_dim();

    std::vector<int> prefix;
    prefix.reserve(tokens.size());
    for (int t = 0; t < policy.seq_len; ++t) {
        const StepForward fw = step_forward(policy, cls, prefix, t, cfg.cfg_scale);
        const ArStepDist dist = dist_from_logits(fw.logits_eff, cfg);
        const int x_t = tokens[t];

        // d/d l_eff of (mean log q + mean entropy) contributions at step t.
        Vec64 g_eff(policy.vocab, 0.0);
        if (d_mean_logp != 0.0) {
            if (dist.log_q[x_t] == kNegInf)
                throw std::runtime_error("ar_score_backward: token left the truncated support");
            const double w = d_mean_logp * inv_t / cfg.temperature;
            for (int v : dist.support) g_eff[v] -= w * std::exp(dist.log_q[v]);
            g_eff[x_t] += w;
        }
        if (d_mean_entropy != 0.0) {
            const Vec64 p = softmax(fw.logits_eff, 1.0);
            const double w = d_mean_entropy * inv_t;
            for (int v = 0; v < policy.vocab; ++v) {
                if (p[v] > 0.0) g_eff[v] += w * (-p[v] * (std::log(p[v]) + dist.entropy_pre));
            }
        }

        // Guidance chain rule: l_eff = l_uncond + s (l_cond - l_uncond).
        auto backprop_branch = [&](const MlpCache& cache, int class_row, double branch_w) {
            if (branch_w == 0.0) return;
            Vec64 g_logits(policy.vocab);
            for (int v = 0; v < policy.vocab; ++v) g_logits[v] = branch_w * g_eff[v];
            const Vec64 g_in = mlp_backward(policy.net, cache, g_logits, grads.net);
            for (int j = 0; j < ec; ++j) grads.class_emb.at(class_row, j) += g_in[j];
            for (int k = 0; k < policy.hist_window; ++k) {
                const int src = t - policy.hist_window + k;
                if (src < 0) continue;
                const int tok = prefix[src];
                for (int j = 0; j < et; ++j)
                    grads.tok_emb.at(tok, j) += g_in[ec + k * et + j];
            }
        };

        if (fw.used_uncond) {
            backprop_branch(fw.cache_cond, cls, cfg.cfg_scale);
            backprop_branch(fw.cache_uncond, policy.null_class(), 1.0 - cfg.cfg_scale);
        } else {
            backprop_branch(fw.cache_cond, cls, 1.0);
        }
        prefix.push_back(x_t);
    }
}

std::size_t ar_param_count(const DiscreteArPolicy& policy) {
    return policy.class_emb.data.size() + policy.tok_emb.data.size() + mlp_param_count(policy.net);
}

Vec64 ar_flatten(const DiscreteArPolicy& policy) {
    Vec64 flat;
    flat.reserve(ar_param_count(policy));
    flat.insert(flat.end(), policy.class_emb.data.begin(), policy.class_emb.data.end());
    flat.insert(flat.end(), policy.tok_emb.data.begin(), policy.tok_emb.data.end());
    mlp_flatten(policy.net, flat);
    return flat;
}

Vec64 ar_flatten_grads(const ArGrads& grads) {
    Vec64 flat;
    flat.insert(flat.end(), grads.class_emb.data.begin(), grads.class_emb.data.end());
    flat.insert(flat.end(), grads.tok_emb.data.begin(), grads.tok_emb.data.end());
    mlp_flatten_grads(grads.net, flat);
    return flat;
}

void ar_unflatten(DiscreteArPolicy& policy, const Vec64& flat) {
    if (flat.size() != ar_param_count(policy))
        throw std::invalid_argument("ar_unflatten: size mismatch");
    std::size_t cursor = 0;
    std::copy(flat.begin(), flat.begin() + policy.class_emb.data.size(),
              policy.class_emb.data.begin());
    cursor += policy.class_emb.data.size();
    std::copy(flat.begin() + cursor, flat.begin() + cursor + policy.tok_emb.data.size(),
              policy.tok_emb.data.begin());
    cursor += policy.tok_emb.data.size();
    mlp_unflatten(policy.net, flat, cursor);
}

nlohmann::json ar_policy_to_json(const DiscreteArPolicy& policy) {
    nlohmann::json doc;
    doc["type"] = "ar_policy";
    doc["vocab"] = policy.vocab;
    doc["seq_len"] = policy.seq_len;
    doc["n_classes"] = policy.n_classes;
    doc["hist_window"] = policy.hist_window;
    doc["class_emb"] = {{"rows", policy.class_emb.rows},
                        {"cols", policy.class_emb.cols},
                        {"w", policy.class_emb.data}};
    doc["tok_emb"] = {{"rows", policy.tok_emb.rows},
                      {"cols", policy.tok_emb.cols},
                      {"w", policy.tok_emb.data}};
    doc["mlp"] = mlp_to_json(policy.net);
    return doc;
}

DiscreteArPolicy ar_policy_from_json(const nlohmann::json& doc) {
    if (doc.at("type").get<std::string>() != "ar_policy")
        throw std::invalid_argument("ar_policy_from_json: wrong checkpoint type");
    DiscreteArPolicy p;
    p.vocab = doc.at("vocab").get<int>();
    p.seq_len = doc.at("seq_len").get<int>();
    p.n_classes = doc.at("n_classes").get<int>();
    p.hist_window = doc.at("hist_window").get<int>();
    auto load_mat = [](const nlohmann::json& jm) {
        Mat64 m(jm.at("rows").get<int>(), jm.at("cols").get<int>());
        m.data = jm.at("w").get<Vec64>();
        if (m.data.size() != static_cast<std::size_t>(m.rows) * m.cols)
            throw std::invalid_argument("ar_policy_from_json: matrix size mismatch");
        return m;
    };
    p.class_emb = load_mat(doc.at("class_emb"));
    p.tok_emb = load_mat(doc.at("tok_emb"));
    p.net = mlp_from_json(doc.at("mlp"));
    p.validate();
    return p;
}

}  // namespace distlab
