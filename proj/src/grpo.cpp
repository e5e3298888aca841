#include "distlab/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace distlab {

void GrpoConfig::validate() const {
    if (group_size < 2) throw std::invalid_argument("GrpoConfig: group_size must be >= 2");
    if (epochs < 1) throw std::invalid_argument("GrpoConfig: epochs must be >= 1");
    if (clip_eps <= 0.0 || clip_eps >= 1.0)
        throw std::invalid_argument("GrpoConfig: clip_eps must lie in (0,1)");
    if (kl_beta < 0.0) throw std::invalid_argument("GrpoConfig: kl_beta must be >= 0");
    if (adv_eps <= 0.0) throw std::invalid_argument("GrpoConfig: adv_eps must be > 0");
}

Vec64 group_advantages(const Vec64& rewards, double adv_eps) {
    if (rewards.size() < 2)
        throw std::invalid_argument("group_advantages: need at least 2 rewards");
    if (adv_eps <= 0.0) throw std::invalid_argument("group_advantages: adv_eps must be > 0");
    const double g = static_cast<double>(rewards.size());
    const double r_bar = sum(rewards) / g;
    double var = 0.0;
    for (double r : rewards) var += (r - r_bar) * (r - r_bar);
    const double s_r = std::sqrt(var / g);
    Vec64 adv(rewards.size());
    for (std::size_t j = 0; j < rewards.size(); ++j)
        adv[j] = (rewards[j] - r_bar) / (s_r + adv_eps);
    return adv;
}

double sequence_ratio(double mean_logp_new, double mean_logp_old) {
    if (!std::isfinite(mean_logp_new) || !std::isfinite(mean_logp_old))
        throw std::invalid_argument("sequence_ratio: non-finite log-prob");
    return std::exp(mean_logp_new - mean_logp_old);
}

double clipped_surrogate(double rho, double advantage, double clip_eps) {
    if (clip_eps <= 0.0 || clip_eps >= 1.0)
        throw std::invalid_argument("clipped_surrogate: clip_eps must lie in (0,1)");
    if (!(rho > 0.0)) throw std::invalid_argument("clipped_surrogate: rho must be > 0");
    const double clipped = std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps);
    return -std::min(rho * advantage, clipped * advantage);
}

double approx_kl(double mean_logp_ref, double mean_logp_new) {
    if (!std::isfinite(mean_logp_ref) || !std::isfinite(mean_logp_new))
        throw std::invalid_argument("approx_kl: non-finite log-prob");
    const double d = mean_logp_ref - mean_logp_new;
    return std::exp(d) - d - 1.0;
}

GrpoLossResult grpo_loss(const GroupBatch& batch, const Vec64& advantages,
                         const GrpoConfig& cfg, double c_eff) {
    const std::size_t g = batch.samples.size();
    if (g == 0) throw std::invalid_argument("grpo_loss: empty batch");
    if (advantages.size() != g)
        throw std::invalid_argument("grpo_loss: advantages/batch size mismatch");
    if (cfg.clip_eps <= 0.0 || cfg.clip_eps >= 1.0)
        throw std::invalid_argument("grpo_loss: clip_eps must lie in (0,1)");

    GrpoLossResult res;
    res.d_mean_logp.assign(g, 0.0);
    res.d_mean_entropy.assign(g, 0.0);

    double surrogate_acc = 0.0, entropy_acc = 0.0, kl_acc = 0.0, ratio_acc = 0.0;
    int clipped_count = 0;
    const double inv_g = 1.0 / static_cast<double>(g);

    for (std::size_t j = 0; j < g; ++j) {
        const GroupSample& s = batch.samples[j];
        if (s.logps_new.empty()) throw std::invalid_argument("grpo_loss: sample has no log-probs");
        const double t_len = static_cast<double>(s.logps_new.size());
        const double lbar_new = mean(s.logps_new);
        // TokenProduct uses summed log-probs, i.e. the T-th power of the
        // length-normalized ratio.
        const double scale = cfg.ratio_mode == RatioMode::TokenProduct ? t_len : 1.0;
        const double rho = std::exp(scale * (lbar_new - s.mean_logp_old));
        if (!std::isfinite(rho)) throw std::runtime_error("grpo_loss: non-finite ratio");

        const double a = advantages[j];
        const double clipped = std::clamp(rho, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
        const double unclipped_term = rho * a;
        const double clipped_term = clipped * a;
        surrogate_acc += -std::min(unclipped_term, clipped_term);
        // Pessimistic branch selection: when the unclipped term is chosen the
        // gradient flows through rho; otherwise the clip is at a bound and the
        // gradient vanishes.
        double dsur_dlbar = 0.0;
        if (unclipped_term <= clipped_term) dsur_dlbar = -a * rho * scale;
        if (rho < 1.0 - cfg.clip_eps || rho > 1.0 + cfg.clip_eps) ++clipped_count;

        double dkl_dlbar = 0.0;
        double kl_j = 0.0;
        if (s.has_ref && cfg.kl_beta > 0.0) {
            const double d = s.mean_logp_ref - lbar_new;
            kl_j = std::exp(d) - d - 1.0;
            dkl_dlbar = 1.0 - std::exp(d);
        }
        kl_acc += kl_j;
        ratio_acc += rho;

        const double h_bar = s.entropies.empty() ? 0.0 : mean(s.entropies);
        entropy_acc += h_bar;

        res.d_mean_logp[j] = inv_g * (dsur_dlbar + cfg.kl_beta * dkl_dlbar);
        res.d_mean_entropy[j] = -c_eff * inv_g;
    }

    res.surrogate_mean = surrogate_acc * inv_g;
    res.entropy_mean = entropy_acc * inv_g;
    res.kl_mean = kl_acc * inv_g;
    res.ratio_mean = ratio_acc * inv_g;
    res.clip_fraction = static_cast<double>(clipped_count) * inv_g;
    res.loss = res.surrogate_mean - c_eff * res.entropy_mean + cfg.kl_beta * res.kl_mean;
    ensure_finite(res.loss, "grpo_loss");
    return res;
}

GrpoLossResult grpo_loss(const GroupBatch& batch, const GrpoConfig& cfg, double c_eff) {
    Vec64 rewards(batch.samples.size());
    for (std::size_t j = 0; j < batch.samples.size(); ++j) rewards[j] = batch.samples[j].reward;
    return grpo_loss(batch, group_advantages(rewards, cfg.adv_eps), cfg, c_eff);
}

}  // namespace distlab
