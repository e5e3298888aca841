#include "distlab/line2d.hpp"

#include <cmath>
#include <stdexcept>

namespace distlab {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

void check_latent(const Gaussian2dPolicy& policy, const Vec64& z) {
    if (static_cast<int>(z.size()) != policy.latent_dim)
        throw std::invalid_argument("gaussian policy: latent size mismatch");
}
}  // namespace

FeatureBatch line_dataset(int n, std::uint64_t seed, double noise_std) {
    if (n < 1) throw std::invalid_argument("line_dataset: n must be >= 1");
    if (noise_std < 0.0) throw std::invalid_argument("line_dataset: noise_std must be >= 0");
    Rng rng(seed);
    FeatureBatch batch(n, 2);
    for (int i = 0; i < n; ++i) {
        const double p = rng.uniform(-1.0, 1.0);
        batch.at(i, 0) = p + noise_std * rng.normal();
        batch.at(i, 1) = p + noise_std * rng.normal();
    }
    return batch;
}

Gaussian2dPolicy Gaussian2dPolicy::init(int latent_dim, int hidden, Rng& rng) {
    Gaussian2dPolicy policy;
    policy.latent_dim = latent_dim;
    policy.net = mlp_init({latent_dim, hidden, 4}, rng);
    return policy;
}

Gaussian2dHead gaussian_forward(const Gaussian2dPolicy& policy, const Vec64& z) {
    check_latent(policy, z);
    Gaussian2dHead head;
    const Vec64 out = mlp_forward_cached(policy.net, z, head.cache);
    head.mu = {out[0], out[1]};
    head.logstd_raw = {out[2], out[3]};
    head.sigma.resize(2);
    for (int d = 0; d < 2; ++d) {
        const double clamped =
            std::clamp(head.logstd_raw[d], policy.logstd_min, policy.logstd_max);
        head.sigma[d] = std::exp(clamped);
    }
    return head;
}

Vec64 gaussian_sample(const Gaussian2dPolicy& policy, const Vec64& z, const Vec64& eps) {
    if (eps.size() != 2) throw std::invalid_argument("gaussian_sample: eps must be 2-D");
    const Gaussian2dHead head = gaussian_forward(policy, z);
    return {head.mu[0] + head.sigma[0] * eps[0], head.mu[1] + head.sigma[1] * eps[1]};
}

double gaussian_logprob(const Gaussian2dPolicy& policy, const Vec64& z, const Vec64& x) {
    if (x.size() != 2) throw std::invalid_argument("gaussian_logprob: x must be 2-D");
    const Gaussian2dHead head = gaussian_forward(policy, z);
    double logp = -kLog2Pi;  // -(d/2) log 2 pi with d = 2
    for (int d = 0; d < 2; ++d) {
        const double u = (x[d] - head.mu[d]) / head.sigma[d];
        logp += -0.5 * u * u - std::log(head.sigma[d]);
    }
    return logp;
}

void gaussian_logprob_backward(const Gaussian2dPolicy& policy, const Vec64& z, const Vec64& x,
                               double scale, MlpGrads& grads) {
    if (x.size() != 2) throw std::invalid_argument("gaussian_logprob_backward: x must be 2-D");
    const Gaussian2dHead head = gaussian_forward(policy, z);
    Vec64 out_grad(4, 0.0);
    for (int d = 0; d < 2; ++d) {
        const double u = (x[d] - head.mu[d]) / head.sigma[d];
        out_grad[d] = scale * u / head.sigma[d];  // d logp / d mu
        const bool clamped = head.logstd_raw[d] < policy.logstd_min ||
                             head.logstd_raw[d] > policy.logstd_max;
        out_grad[2 + d] = clamped ? 0.0 : scale * (u * u - 1.0);  // d logp / d logstd
    }
    mlp_backward(policy.net, head.cache, out_grad, grads);
}

void gaussian_sample_backward(const Gaussian2dPolicy& policy, const Vec64& z, const Vec64& eps,
                              const Vec64& d_loss_dx, MlpGrads& grads) {
    if (eps.size() != 2 || d_loss_dx.size() != 2)
        throw std::invalid_argument("gaussian_sample_backward: 2-D vectors expected");
    const Gaussian2dHead head = gaussian_forward(policy, z);
    Vec64 out_grad(4, 0.0);
    for (int d = 0; d < 2; ++d) {
        out_grad[d] = d_loss_dx[d];  // dx/dmu = 1
        const bool clamped = head.logstd_raw[d] < policy.logstd_min ||
                             head.logstd_raw[d] > policy.logstd_max;
        // dx/dlogstd = sigma * eps through sigma = exp(logstd)
        out_grad[2 + d] = clamped ? 0.0 : d_loss_dx[d] * head.sigma[d] * eps[d];
    }
    mlp_backward(policy.net, head.cache, out_grad, grads);
}

double gaussian_entropy(const Vec64& sigma) {
    double h = static_cast<double>(sigma.size()) * 0.5 * (1.0 + kLog2Pi);
    for (double s : sigma) h += std::log(s);
    return h;
}

nlohmann::json gaussian2d_to_json(const Gaussian2dPolicy& policy) {
    nlohmann::json doc;
    doc["type"] = "gaussian2d";
    doc["latent_dim"] = policy.latent_dim;
    doc["logstd_min"] = policy.logstd_min;
    doc["logstd_max"] = policy.logstd_max;
    doc["mlp"] = mlp_to_json(policy.net);
    return doc;
}

Gaussian2dPolicy gaussian2d_from_json(const nlohmann::json& doc) {
    if (doc.at("type").get<std::string>() != "gaussian2d")
        throw std::invalid_argument("gaussian2d_from_json: wrong checkpoint type");
    Gaussian2dPolicy policy;
    policy.latent_dim = doc.at("latent_dim").get<int>();
    policy.logstd_min = doc.at("logstd_min").get<double>();
    policy.logstd_max = doc.at("logstd_max").get<double>();
    policy.net = mlp_from_json(doc.at("mlp"));
    return policy;
}

}  // namespace distlab
