#pragma once

#include <json.hpp>

#include "distlab/moments.hpp"
#include "distlab/rng.hpp"

namespace distlab {

// Deterministic sequence-to-feature map: normalized unigram (K bins) and
// bigram (K^2 bins) histograms projected to `dim` dimensions with a fixed
// seed-derived matrix. Identity mode (dim == K + K^2) exposes the raw
// histograms for tests.
struct FeatureEmbedder {
    int vocab = 16;
    int dim = 64;
    bool identity = false;
    Mat64 proj;  // dim x (vocab + vocab^2)

    static FeatureEmbedder create(int vocab, int dim, std::uint64_t seed);
    static FeatureEmbedder create_identity(int vocab);

    int hist_dim() const { return vocab + vocab * vocab; }
    Vec64 embed(const std::vector<int>& tokens) const;
};

// -||f - template_feature||^2; maximal (zero) when the feature hits the
// class template exactly.
double align_reward(const Vec64& feature, const Vec64& template_feature);

// Negated roughness: -mean((x_{t+1} - x_t)^2) over the raw token ids.
// Constant sequences score 0, the maximum.
double pref_reward(const std::vector<int>& tokens);

struct CorpusSeq {
    int cls = 0;
    std::vector<int> tokens;
};

struct ArEnvConfig {
    int vocab = 16;
    int seq_len = 16;
    int n_classes = 8;
    int hist_window = 4;
    int feature_dim = 64;
    int hidden = 64;
    int class_emb_dim = 8;
    int tok_emb_dim = 8;
    int corpus_per_class = 256;
    double corpus_noise = 0.2;
    std::uint64_t corpus_seed = 7;
    std::uint64_t feature_seed = 99;
};

// Everything the trainer needs besides the policy: the embedder, the
// per-class target sequences, a fixed noisy corpus, its reference feature
// moments, and the template feature table behind align_reward.
struct ArEnv {
    ArEnvConfig cfg;
    FeatureEmbedder embedder;
    std::vector<std::vector<int>> templates;   // one target sequence per class
    std::vector<Vec64> template_features;
    std::vector<CorpusSeq> corpus;
    MomentPair ref_moments;

    static ArEnv create(const ArEnvConfig& cfg);

    double align(const Vec64& feature, int cls) const;
};

// Smooth per-class target sequences: a clamped small-step random walk spread
// across the vocabulary by class.
std::vector<std::vector<int>> make_class_templates(int n_classes, int vocab, int seq_len,
                                                   std::uint64_t seed);

// Template with per-token +-1 perturbations applied with probability noise_p.
std::vector<int> corpus_perturb(const std::vector<int>& tmpl, double noise_p, int vocab,
                                Rng& rng);

nlohmann::json corpus_to_json(const ArEnv& env);

}  // namespace distlab
