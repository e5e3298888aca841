#include "distlab/ar_env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace distlab {

FeatureEmbedder FeatureEmbedder::create(int vocab, int dim, std::uint64_t seed) {
    if (vocab < 2 || dim < 1) throw std::invalid_argument("FeatureEmbedder: bad dimensions");
    FeatureEmbedder e;
    e.vocab = vocab;
    e.dim = dim;
    const int h = e.hist_dim();
    e.proj = Mat64(dim, h);
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(h));
    for (double& v : e.proj.data) v = rng.normal() * scale;
    return e;
}

FeatureEmbedder FeatureEmbedder::create_identity(int vocab) {
    FeatureEmbedder e;
    e.vocab = vocab;
    e.identity = true;
    e.dim = e.hist_dim();
    return e;
}

Vec64 FeatureEmbedder::embed(const std::vector<int>& tokens) const {
    if (tokens.empty()) throw std::invalid_argument("feature_embed: empty sequence");
    for (int tok : tokens) {
        if (tok < 0 || tok >= vocab) throw std::invalid_argument("feature_embed: token out of range");
    }
    Vec64 hist(hist_dim(), 0.0);
    const double w_uni = 1.0 / static_cast<double>(tokens.size());
    for (int tok : tokens) hist[tok] += w_uni;
    if (tokens.size() > 1) {
        const double w_bi = 1.0 / static_cast<double>(tokens.size() - 1);
        for (std::size_t t = 0; t + 1 < tokens.size(); ++t)
            hist[vocab + tokens[t] * vocab + tokens[t + 1]] += w_bi;
    }
    if (identity) return hist;

    Vec64 f(dim, 0.0);
    for (int i = 0; i < dim; ++i) {
        const double* row = &proj.data[static_cast<std::size_t>(i) * proj.cols];
        double acc = 0.0;
        for (int j = 0; j < proj.cols; ++j) acc += row[j] * hist[j];
        f[i] = acc;
    }
    return f;
}

double align_reward(const Vec64& feature, const Vec64& template_feature) {
    if (feature.size() != template_feature.size())
        throw std::invalid_argument("align_reward: feature size mismatch");
    double d2 = 0.0;
    for (std::size_t j = 0; j < feature.size(); ++j) {
        const double d = feature[j] - template_feature[j];
        d2 += d * d;
    }
    return -d2;
}

double pref_reward(const std::vector<int>& tokens) {
    if (tokens.empty()) throw std::invalid_argument("pref_reward: empty sequence");
    if (tokens.size() == 1) return 0.0;
    double acc = 0.0;
    for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
        const double d = static_cast<double>(tokens[t + 1] - tokens[t]);
        acc += d * d;
    }
    return -acc / static_cast<double>(tokens.size() - 1);
}

std::vector<std::vector<int>> make_class_templates(int n_classes, int vocab, int seq_len,
                                                   std::uint64_t seed) {
    if (n_classes < 1 || vocab < 2 || seq_len < 1)
        throw std::invalid_argument("make_class_templates: bad dimensions");
    std::vector<std::vector<int>> templates(n_classes);
    for (int c = 0; c < n_classes; ++c) {
        Rng rng(seed, static_cast<std::uint64_t>(c) + 1);
        // Start points spread across the vocabulary so classes stay distinct.
        int tok = std::min(vocab - 1, (2 * c + 1) * vocab / (2 * n_classes));
        std::vector<int>& seq = templates[c];
        seq.reserve(seq_len);
        for (int t = 0; t < seq_len; ++t) {
            seq.push_back(tok);
            const int step = rng.uniform_int(3) - 1;  // {-1, 0, +1}
            tok = std::clamp(tok + step, 0, vocab - 1);
        }
    }
    return templates;
}

std::vector<int> corpus_perturb(const std::vector<int>& tmpl, double noise_p, int vocab,
                                Rng& rng) {
    std::vector<int> seq = tmpl;
    for (int& tok : seq) {
        if (rng.uniform() < noise_p) {
            const int shift = rng.uniform() < 0.5 ? -1 : 1;
            tok = std::clamp(tok + shift, 0, vocab - 1);
        }
    }
    return seq;
}

ArEnv ArEnv::create(const ArEnvConfig& cfg) {
    ArEnv env;
    env.cfg = cfg;
    env.embedder = FeatureEmbedder::create(cfg.vocab, cfg.feature_dim, cfg.feature_seed);
    env.templates = make_class_templates(cfg.n_classes, cfg.vocab, cfg.seq_len, cfg.corpus_seed);
    env.template_features.reserve(cfg.n_classes);
    for (const auto& tmpl : env.templates) env.template_features.push_back(env.embedder.embed(tmpl));

    Rng rng(cfg.corpus_seed, 0xC0DE);
    env.corpus.reserve(static_cast<std::size_t>(cfg.n_classes) * cfg.corpus_per_class);
    for (int c = 0; c < cfg.n_classes; ++c) {
        for (int i = 0; i < cfg.corpus_per_class; ++i) {
            CorpusSeq s;
            s.cls = c;
            s.tokens = corpus_perturb(env.templates[c], cfg.corpus_noise, cfg.vocab, rng);
            env.corpus.push_back(std::move(s));
        }
    }

    FeatureBatch ref_batch(static_cast<int>(env.corpus.size()), cfg.feature_dim);
    for (std::size_t i = 0; i < env.corpus.size(); ++i) {
        const Vec64 f = env.embedder.embed(env.corpus[i].tokens);
        std::copy(f.begin(), f.end(), ref_batch.row(static_cast<int>(i)));
    }
    env.ref_moments = reference_moments_from_samples(ref_batch, 0.0);
    return env;
}

double ArEnv::align(const Vec64& feature, int cls) const {
    if (cls < 0 || cls >= static_cast<int>(template_features.size()))
        throw std::invalid_argument("align_reward: unknown class");
    return align_reward(feature, template_features[cls]);
}

nlohmann::json corpus_to_json(const ArEnv& env) {
    nlohmann::json doc;
    doc["vocab"] = env.cfg.vocab;
    doc["seq_len"] = env.cfg.seq_len;
    doc["classes"] = env.cfg.n_classes;
    doc["templates"] = env.templates;
    nlohmann::json seqs = nlohmann::json::array();
    for (const CorpusSeq& s : env.corpus) seqs.push_back({{"class", s.cls}, {"tokens", s.tokens}});
    doc["sequences"] = std::move(seqs);
    return doc;
}

}  // namespace distlab
