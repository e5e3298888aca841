#include "distlab/moments.hpp"

#include <cmath>
#include <stdexcept>

namespace distlab {

namespace {

void check_eps_var(double eps_var) {
    if (eps_var < 0.0 || !std::isfinite(eps_var))
        throw std::invalid_argument("moments: eps_var must be finite and >= 0");
}

// sigma from raw moments with the variance clamp and floor.
Vec64 sigma_from(const Vec64& mu, const Vec64& m2, double eps_var) {
    Vec64 sigma(mu.size());
    for (std::size_t j = 0; j < mu.size(); ++j) {
        const double v = std::max(m2[j] - mu[j] * mu[j], 0.0);
        sigma[j] = std::sqrt(v + eps_var);
    }
    return sigma;
}

MomentPair moments_from_sums(const Vec64& s1, const Vec64& s2, double count, double eps_var) {
    MomentPair m;
    const std::size_t d = s1.size();
    m.mu.resize(d);
    Vec64 m2(d);
    for (std::size_t j = 0; j < d; ++j) {
        m.mu[j] = s1[j] / count;
        m2[j] = s2[j] / count;
    }
    m.sigma = sigma_from(m.mu, m2, eps_var);
    m.m2 = std::move(m2);
    return m;
}

}  // namespace

void FeatureBatch::validate() const {
    if (n <= 0 || d <= 0) throw std::invalid_argument("FeatureBatch: empty batch");
    if (data.size() != static_cast<std::size_t>(n) * d)
        throw std::invalid_argument("FeatureBatch: storage size mismatch");
    if (!all_finite(data)) throw std::invalid_argument("FeatureBatch: non-finite entries");
}

MomentPair EmaMomentState::moments() const {
    if (!initialized) throw std::logic_error("EmaMomentState: not initialized");
    MomentPair m;
    m.mu = mu;
    m.sigma = sigma_from(mu, m2, eps_var);
    m.m2 = m2;
    return m;
}

MomentPair batch_moments(const FeatureBatch& batch, double eps_var) {
    batch.validate();
    check_eps_var(eps_var);
    Vec64 s1(batch.d, 0.0), s2(batch.d, 0.0);
    for (int i = 0; i < batch.n; ++i) {
        const double* x = batch.row(i);
        for (int j = 0; j < batch.d; ++j) {
            s1[j] += x[j];
            s2[j] += x[j] * x[j];
        }
    }
    return moments_from_sums(s1, s2, static_cast<double>(batch.n), eps_var);
}

double fid_diag(const MomentPair& ref, const MomentPair& gen) {
    if (ref.dim() != gen.dim()) throw std::invalid_argument("fid_diag: dimension mismatch");
    // Kahan compensation: rewards downstream are differences of nearly equal
    // distances, so the summation error has to stay far below 1e-10.
    double acc = 0.0, comp = 0.0;
    for (int j = 0; j < ref.dim(); ++j) {
        const double dm = ref.mu[j] - gen.mu[j];
        const double ds = ref.sigma[j] - gen.sigma[j];
        const double term = dm * dm + ds * ds;
        const double y = term - comp;
        const double t = acc + y;
        comp = (t - acc) - y;
        acc = t;
    }
    return acc;
}

std::vector<MomentPair> loo_moments(const FeatureBatch& batch, double eps_var) {
    batch.validate();
    check_eps_var(eps_var);
    if (batch.n < 2) throw std::invalid_argument("loo_moments: need at least 2 samples");

    Vec64 s1(batch.d, 0.0), s2(batch.d, 0.0);
    for (int i = 0; i < batch.n; ++i) {
        const double* x = batch.row(i);
        for (int j = 0; j < batch.d; ++j) {
            s1[j] += x[j];
            s2[j] += x[j] * x[j];
        }
    }

    std::vector<MomentPair> out;
    out.reserve(batch.n);
    const double count = static_cast<double>(batch.n - 1);
    Vec64 s1_i(batch.d), s2_i(batch.d);
    for (int i = 0; i < batch.n; ++i) {
        const double* x = batch.row(i);
        for (int j = 0; j < batch.d; ++j) {
            s1_i[j] = s1[j] - x[j];
            s2_i[j] = s2[j] - x[j] * x[j];
        }
        out.push_back(moments_from_sums(s1_i, s2_i, count, eps_var));
    }
    return out;
}

Vec64 loo_batch_rewards(const FeatureBatch& batch, const MomentPair& ref, double eps_var) {
    if (ref.dim() != batch.d) throw std::invalid_argument("loo_batch_rewards: dim mismatch");
    const MomentPair full = batch_moments(batch, eps_var);
    const double fid_batch = fid_diag(ref, full);
    const std::vector<MomentPair> loo = loo_moments(batch, eps_var);
    Vec64 rewards(batch.n);
    for (int i = 0; i < batch.n; ++i) rewards[i] = fid_diag(ref, loo[i]) - fid_batch;
    return rewards;
}

EmaMomentState ema_update(const EmaMomentState& state, const Vec64& batch_mu,
                          const Vec64& batch_m2) {
    if (state.alpha <= 0.0 || state.alpha >= 1.0)
        throw std::invalid_argument("ema_update: alpha must lie in (0,1)");
    if (batch_mu.size() != batch_m2.size())
        throw std::invalid_argument("ema_update: moment size mismatch");
    check_eps_var(state.eps_var);

    EmaMomentState next = state;
    if (!state.initialized) {
        // Cold start adopts the first batch verbatim (alpha = 1 on step 0).
        next.mu = batch_mu;
        next.m2 = batch_m2;
        next.initialized = true;
        return next;
    }
    if (state.mu.size() != batch_mu.size())
        throw std::invalid_argument("ema_update: state dimension mismatch");
    const double a = state.alpha;
    for (std::size_t j = 0; j < batch_mu.size(); ++j) {
        next.mu[j] = (1.0 - a) * state.mu[j] + a * batch_mu[j];
        next.m2[j] = (1.0 - a) * state.m2[j] + a * batch_m2[j];
    }
    return next;
}

EmaLooResult ema_loo_rewards(const EmaMomentState& state, const FeatureBatch& batch,
                             const MomentPair& ref) {
    if (ref.dim() != batch.d) throw std::invalid_argument("ema_loo_rewards: dim mismatch");
    const MomentPair full = batch_moments(batch, state.eps_var);
    const std::vector<MomentPair> loo = loo_moments(batch, state.eps_var);

    EmaLooResult res;
    res.next_state = ema_update(state, full.mu, *full.m2);
    res.fid_full = fid_diag(ref, res.next_state.moments());
    res.rewards.resize(batch.n);
    for (int i = 0; i < batch.n; ++i) {
        const EmaMomentState hypo = ema_update(state, loo[i].mu, *loo[i].m2);
        res.rewards[i] = fid_diag(ref, hypo.moments()) - res.fid_full;
    }
    return res;
}

MomentPair reference_moments_from_samples(const FeatureBatch& samples, double eps_var) {
    if (samples.n < 2)
        throw std::invalid_argument("reference_moments_from_samples: need at least 2 samples");
    return batch_moments(samples, eps_var);
}

nlohmann::json reference_to_json(const MomentPair& ref, const std::string& source,
                                 int n_samples) {
    nlohmann::json doc;
    doc["dim"] = ref.dim();
    doc["mu"] = ref.mu;
    doc["sigma"] = ref.sigma;
    doc["source"] = source;
    doc["n_samples"] = n_samples;
    return doc;
}

MomentPair reference_from_json(const nlohmann::json& doc) {
    MomentPair ref;
    ref.mu = doc.at("mu").get<Vec64>();
    ref.sigma = doc.at("sigma").get<Vec64>();
    if (static_cast<int>(ref.mu.size()) != doc.at("dim").get<int>() ||
        ref.mu.size() != ref.sigma.size())
        throw std::invalid_argument("reference_from_json: inconsistent dimensions");
    return ref;
}

}  // namespace distlab
