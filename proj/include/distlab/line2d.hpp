#pragma once

#include <json.hpp>

#include "distlab/mlp.hpp"
#include "distlab/moments.hpp"
#include "distlab/rng.hpp"

namespace distlab {

// n points on the diagonal segment between (-1,-1) and (1,1) plus isotropic
// Gaussian noise of the given std.
FeatureBatch line_dataset(int n, std::uint64_t seed, double noise_std = 0.05);

// Diagonal Gaussian over R^2 whose mean and log-std come from a small net on
// a latent input. The log-std head is clamped to [logstd_min, logstd_max].
struct Gaussian2dPolicy {
    MlpParams net;  // latent_dim -> ... -> 4 = (mu_x, mu_y, logstd_x, logstd_y)
    int latent_dim = 8;
    double logstd_min = -6.0;
    double logstd_max = 2.0;

    static Gaussian2dPolicy init(int latent_dim, int hidden, Rng& rng);
};

struct Gaussian2dHead {
    Vec64 mu;          // 2
    Vec64 sigma;       // 2, exp of the clamped log-std
    Vec64 logstd_raw;  // 2, pre-clamp values
    MlpCache cache;
};

Gaussian2dHead gaussian_forward(const Gaussian2dPolicy& policy, const Vec64& z);

// x = mu(z) + sigma(z) * eps (reparameterized sample).
Vec64 gaussian_sample(const Gaussian2dPolicy& policy, const Vec64& z, const Vec64& eps);

// Exact diagonal-Gaussian log density of x under the policy at latent z.
double gaussian_logprob(const Gaussian2dPolicy& policy, const Vec64& z, const Vec64& x);

// Accumulates d(scale * logprob)/d params into grads. Clamped log-std
// coordinates pass no gradient.
void gaussian_logprob_backward(const Gaussian2dPolicy& policy, const Vec64& z, const Vec64& x,
                               double scale, MlpGrads& grads);

// Pathwise chain rule: accumulates dL/dparams given dL/dx at the
// reparameterized sample x(z, eps).
void gaussian_sample_backward(const Gaussian2dPolicy& policy, const Vec64& z, const Vec64& eps,
                              const Vec64& d_loss_dx, MlpGrads& grads);

// Differential entropy: sum(log sigma) + d/2 * (1 + log 2 pi). Logging only.
double gaussian_entropy(const Vec64& sigma);

nlohmann::json gaussian2d_to_json(const Gaussian2dPolicy& policy);
Gaussian2dPolicy gaussian2d_from_json(const nlohmann::json& doc);

}  // namespace distlab
