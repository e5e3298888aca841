#include <doctest.h>

#include <cmath>

#include "distlab/line2d.hpp"
#include "distlab/moments.hpp"
#include "distlab/rng.hpp"

using namespace distlab;

namespace {

FeatureBatch make_batch(std::initializer_list<std::initializer_list<double>> rows) {
    const int n = static_cast<int>(rows.size());
    const int d = static_cast<int>(rows.begin()->size());
    FeatureBatch b(n, d);
    int i = 0;
    for (const auto& row : rows) {
        int j = 0;
        for (double v : row) b.at(i, j++) = v;
        ++i;
    }
    return b;
}

FeatureBatch random_batch(Rng& rng, int n, int d, double scale = 1.0) {
    FeatureBatch b(n, d);
    for (double& v : b.data) v = scale * rng.normal();
    return b;
}

// Two-pass oracle: mean first, then centered variance, no shared sums.
MomentPair two_pass_moments(const FeatureBatch& b, double eps_var) {
    MomentPair m;
    m.mu.assign(b.d, 0.0);
    m.sigma.assign(b.d, 0.0);
    Vec64 m2(b.d, 0.0);
    for (int i = 0; i < b.n; ++i)
        for (int j = 0; j < b.d; ++j) {
            m.mu[j] += b.at(i, j) / b.n;
            m2[j] += b.at(i, j) * b.at(i, j) / b.n;
        }
    for (int j = 0; j < b.d; ++j) {
        double var = 0.0;
        for (int i = 0; i < b.n; ++i) {
            const double c = b.at(i, j) - m.mu[j];
            var += c * c / b.n;
        }
        m.sigma[j] = std::sqrt(var + eps_var);
    }
    m.m2 = std::move(m2);
    return m;
}

FeatureBatch drop_row(const FeatureBatch& b, int skip) {
    FeatureBatch out(b.n - 1, b.d);
    int r = 0;
    for (int i = 0; i < b.n; ++i) {
        if (i == skip) continue;
        for (int j = 0; j < b.d; ++j) out.at(r, j) = b.at(i, j);
        ++r;
    }
    return out;
}

MomentPair ref_of(Vec64 mu, Vec64 sigma) {
    MomentPair m;
    m.mu = std::move(mu);
    m.sigma = std::move(sigma);
    return m;
}

}  // namespace

TEST_CASE("batch_moments: two-point symmetry") {
    const MomentPair m = batch_moments(make_batch({{0.0, 0.0}, {2.0, 2.0}}), 0.0);
    CHECK(m.mu[0] == 1.0);
    CHECK(m.mu[1] == 1.0);
    CHECK(m.sigma[0] == 1.0);
    CHECK(m.sigma[1] == 1.0);
}

TEST_CASE("batch_moments: repeated point hits the variance floor") {
    const double eps = 1e-6;
    const MomentPair m = batch_moments(make_batch({{3.0, -1.0}, {3.0, -1.0}, {3.0, -1.0}}), eps);
    CHECK(m.sigma[0] == doctest::Approx(std::sqrt(eps)).epsilon(1e-12));
    CHECK(m.sigma[1] == doctest::Approx(std::sqrt(eps)).epsilon(1e-12));
}

TEST_CASE("batch_moments: matches naive two-pass oracle") {
    Rng rng(1);
    const FeatureBatch b = random_batch(rng, 16, 4);
    const MomentPair fast = batch_moments(b, 1e-6);
    const MomentPair slow = two_pass_moments(b, 1e-6);
    for (int j = 0; j < 4; ++j) {
        CHECK(std::abs(fast.mu[j] - slow.mu[j]) < 1e-12);
        CHECK(std::abs(fast.sigma[j] - slow.sigma[j]) < 1e-12);
    }
}

TEST_CASE("batch_moments: empty batch rejected") {
    FeatureBatch empty;
    CHECK_THROWS_AS(batch_moments(empty, 0.0), std::invalid_argument);
}

TEST_CASE("fid_diag: identity, unit shift, direct formula") {
    const MomentPair a = ref_of({0.0, 0.0}, {1.0, 1.0});
    CHECK(fid_diag(a, a) == 0.0);
    CHECK(fid_diag(a, ref_of({1.0, 0.0}, {1.0, 1.0})) == 1.0);
    CHECK(fid_diag(a, ref_of({3.0, 4.0}, {2.0, 1.0})) == 26.0);
}

TEST_CASE("fid_diag: symmetric, nonnegative, dimension-checked") {
    Rng rng(2);
    for (int rep = 0; rep < 50; ++rep) {
        const int d = 1 + rng.uniform_int(32);
        MomentPair a = ref_of(Vec64(d), Vec64(d)), b = ref_of(Vec64(d), Vec64(d));
        for (int j = 0; j < d; ++j) {
            a.mu[j] = rng.normal();
            b.mu[j] = rng.normal();
            a.sigma[j] = std::abs(rng.normal());
            b.sigma[j] = std::abs(rng.normal());
        }
        const double f = fid_diag(a, b);
        CHECK(f >= 0.0);
        CHECK(f == fid_diag(b, a));
    }
    CHECK_THROWS_AS(fid_diag(ref_of({0.0}, {1.0}), ref_of({0.0, 0.0}, {1.0, 1.0})),
                    std::invalid_argument);
}

TEST_CASE("fid_diag: scaling features by s multiplies distances by s^2") {
    Rng rng(3);
    const FeatureBatch b = random_batch(rng, 12, 6);
    const MomentPair ref = two_pass_moments(random_batch(rng, 12, 6), 0.0);
    const double base = fid_diag(ref, batch_moments(b, 0.0));
    for (double s : {0.5, 2.0, 7.0}) {
        FeatureBatch scaled = b;
        for (double& v : scaled.data) v *= s;
        MomentPair sref = ref;
        for (double& v : sref.mu) v *= s;
        for (double& v : sref.sigma) v *= s;
        const double f = fid_diag(sref, batch_moments(scaled, 0.0));
        CHECK(f == doctest::Approx(s * s * base).epsilon(1e-10));
    }
}

TEST_CASE("loo_moments: pair case reduces to the other sample") {
    const double eps = 1e-6;
    const auto loo = loo_moments(make_batch({{1.0, 5.0}, {-2.0, 3.0}}), eps);
    CHECK(loo[0].mu[0] == -2.0);
    CHECK(loo[0].mu[1] == 3.0);
    CHECK(loo[0].sigma[0] == doctest::Approx(std::sqrt(eps)).epsilon(1e-12));
    CHECK(loo[1].mu[0] == 1.0);
    CHECK(loo[1].mu[1] == 5.0);
}

TEST_CASE("loo_moments: summation identity for mean of leave-one-out sums") {
    Rng rng(4);
    const FeatureBatch b = random_batch(rng, 9, 3);
    const auto loo = loo_moments(b, 0.0);
    const MomentPair full = batch_moments(b, 0.0);
    // mean_i S1_{-i} = (N-1)/N * S1, expressed through the returned means
    for (int j = 0; j < b.d; ++j) {
        double acc = 0.0;
        for (int i = 0; i < b.n; ++i) acc += loo[i].mu[j] * (b.n - 1);
        acc /= b.n;
        CHECK(acc == doctest::Approx((b.n - 1) * full.mu[j]).epsilon(1e-12));
    }
}

TEST_CASE("loo_moments: equals naive recomputation on each subset") {
    Rng rng(5);
    const FeatureBatch b = random_batch(rng, 8, 3);
    const auto loo = loo_moments(b, 1e-6);
    for (int i = 0; i < b.n; ++i) {
        const MomentPair naive = two_pass_moments(drop_row(b, i), 1e-6);
        for (int j = 0; j < b.d; ++j) {
            CHECK(std::abs(loo[i].mu[j] - naive.mu[j]) < 1e-10);
            CHECK(std::abs(loo[i].sigma[j] - naive.sigma[j]) < 1e-10);
        }
    }
}

TEST_CASE("loo_moments: property sweep over sizes and dims") {
    Rng rng(6);
    for (int rep = 0; rep < 100; ++rep) {
        const int n = 2 + rng.uniform_int(63);
        const int d = 1 + rng.uniform_int(256);
        const FeatureBatch b = random_batch(rng, n, d, 1.0 + 2.0 * rng.uniform());
        const auto loo = loo_moments(b, 1e-6);
        const int i = rng.uniform_int(n);
        const MomentPair naive = two_pass_moments(drop_row(b, i), 1e-6);
        for (int j = 0; j < d; ++j) {
            REQUIRE(std::abs(loo[i].mu[j] - naive.mu[j]) < 1e-10);
            REQUIRE(std::abs(loo[i].sigma[j] - naive.sigma[j]) < 1e-10);
        }
    }
    FeatureBatch single(1, 2);
    CHECK_THROWS_AS(loo_moments(single, 0.0), std::invalid_argument);
}

TEST_CASE("loo_batch_rewards: symmetric pair gets equal rewards") {
    const FeatureBatch b = make_batch({{-1.5}, {1.5}});
    const MomentPair ref = ref_of({0.0}, {1.0});
    const Vec64 r = loo_batch_rewards(b, ref);
    CHECK(r[0] == doctest::Approx(r[1]).epsilon(1e-14));
}

TEST_CASE("loo_batch_rewards: sample sitting on the reference mean wins") {
    // One sample exactly at mu_r, the rest far away: removing the good
    // sample must hurt the most.
    const FeatureBatch b = make_batch({{0.0, 0.0}, {4.0, -3.0}, {5.0, 4.0}, {-6.0, 5.0}});
    const MomentPair ref = ref_of({0.0, 0.0}, {1.0, 1.0});
    const Vec64 r = loo_batch_rewards(b, ref);
    for (int i = 1; i < 4; ++i) CHECK(r[0] > r[i]);
}

TEST_CASE("loo_batch_rewards: brute-force oracle on random instances") {
    Rng rng(7);
    for (int rep = 0; rep < 100; ++rep) {
        const int n = 2 + rng.uniform_int(10);
        const int d = 1 + rng.uniform_int(4);
        const FeatureBatch b = random_batch(rng, n, d);
        MomentPair ref = ref_of(Vec64(d), Vec64(d));
        for (int j = 0; j < d; ++j) {
            ref.mu[j] = rng.normal();
            ref.sigma[j] = 0.5 + std::abs(rng.normal());
        }
        const Vec64 r = loo_batch_rewards(b, ref, 1e-6);
        const double f_batch = fid_diag(ref, two_pass_moments(b, 1e-6));
        for (int i = 0; i < n; ++i) {
            const double f_i = fid_diag(ref, two_pass_moments(drop_row(b, i), 1e-6));
            REQUIRE(std::abs(r[i] - (f_i - f_batch)) < 1e-10);
        }
    }
}

TEST_CASE("ema_update: midpoint, fixed point, and recurrence") {
    EmaMomentState s;
    s.alpha = 0.5;
    s.eps_var = 0.0;
    s.mu = {0.0};
    s.m2 = {0.0};
    s.initialized = true;
    const EmaMomentState next = ema_update(s, {2.0}, {4.0});
    CHECK(next.mu[0] == 1.0);
    CHECK(next.m2[0] == 2.0);

    const EmaMomentState fixed = ema_update(next, next.mu, next.m2);
    CHECK(fixed.mu[0] == next.mu[0]);
    CHECK(fixed.m2[0] == next.m2[0]);

    // Three successive updates against the unrolled recurrence.
    EmaMomentState t = s;
    const Vec64 mus = {1.0, -2.0, 0.5};
    const Vec64 m2s = {2.0, 5.0, 1.0};
    for (int k = 0; k < 3; ++k) t = ema_update(t, {mus[k]}, {m2s[k]});
    double mu_expect = 0.0, m2_expect = 0.0;
    for (int k = 0; k < 3; ++k) {
        mu_expect = 0.5 * mu_expect + 0.5 * mus[k];
        m2_expect = 0.5 * m2_expect + 0.5 * m2s[k];
    }
    CHECK(t.mu[0] == doctest::Approx(mu_expect).epsilon(1e-15));
    CHECK(t.m2[0] == doctest::Approx(m2_expect).epsilon(1e-15));
}

TEST_CASE("ema_update: cold start adopts the batch, alpha validated") {
    EmaMomentState s;
    s.alpha = 0.25;
    const EmaMomentState next = ema_update(s, {3.0, 1.0}, {10.0, 2.0});
    CHECK(next.initialized);
    CHECK(next.mu == Vec64{3.0, 1.0});
    CHECK(next.m2 == Vec64{10.0, 2.0});

    EmaMomentState bad = next;
    bad.alpha = 1.0;
    CHECK_THROWS_AS(ema_update(bad, {0.0, 0.0}, {1.0, 1.0}), std::invalid_argument);
    bad.alpha = 0.0;
    CHECK_THROWS_AS(ema_update(bad, {0.0, 0.0}, {1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("ema_loo_rewards: cold start reduces to the batch-level rewards") {
    Rng rng(8);
    const FeatureBatch b = random_batch(rng, 6, 2);
    MomentPair ref = ref_of({0.1, -0.2}, {0.9, 1.1});
    EmaMomentState s;
    s.alpha = 0.5;
    s.eps_var = 1e-6;
    const EmaLooResult got = ema_loo_rewards(s, b, ref);
    const Vec64 batch_r = loo_batch_rewards(b, ref, 1e-6);
    for (int i = 0; i < b.n; ++i)
        CHECK(got.rewards[i] == doctest::Approx(batch_r[i]).epsilon(1e-14));
}

TEST_CASE("ema_loo_rewards: near-one alpha approaches the batch rewards") {
    Rng rng(9);
    const FeatureBatch b = random_batch(rng, 6, 2);
    const MomentPair ref = ref_of({0.0, 0.0}, {1.0, 1.0});
    EmaMomentState s;
    s.alpha = 1.0 - 1e-9;
    s.eps_var = 1e-6;
    s.initialized = true;
    s.mu = {5.0, -5.0};
    s.m2 = {30.0, 30.0};
    const EmaLooResult got = ema_loo_rewards(s, b, ref);
    const Vec64 batch_r = loo_batch_rewards(b, ref, 1e-6);
    for (int i = 0; i < b.n; ++i) CHECK(std::abs(got.rewards[i] - batch_r[i]) < 1e-6);
}

TEST_CASE("ema_loo_rewards: fixed point at the optimum stays quiet") {
    // Batch matching the reference moments with the EMA already there.
    const FeatureBatch b = make_batch({{1.0}, {-1.0}, {1.0}, {-1.0}});
    const MomentPair ref = batch_moments(b, 1e-6);
    EmaMomentState s;
    s.alpha = 0.5;
    s.eps_var = 1e-6;
    s.initialized = true;
    s.mu = {0.0};
    s.m2 = {1.0};
    const EmaLooResult got = ema_loo_rewards(s, b, ref);
    CHECK(got.fid_full < 1e-12);
    for (double r : got.rewards) CHECK(std::abs(r) < 0.2);  // small LOO perturbations only
}

TEST_CASE("ema_loo_rewards: oracle with N+1 independent updates") {
    Rng rng(10);
    for (int rep = 0; rep < 100; ++rep) {
        const int n = 2 + rng.uniform_int(8);
        const int d = 1 + rng.uniform_int(4);
        const FeatureBatch b = random_batch(rng, n, d);
        MomentPair ref = ref_of(Vec64(d), Vec64(d));
        for (int j = 0; j < d; ++j) {
            ref.mu[j] = rng.normal();
            ref.sigma[j] = 0.5 + std::abs(rng.normal());
        }
        EmaMomentState s;
        s.alpha = 0.5;
        s.eps_var = 1e-6;
        s.initialized = true;
        s.mu.resize(d);
        s.m2.resize(d);
        for (int j = 0; j < d; ++j) {
            s.mu[j] = rng.normal();
            s.m2[j] = s.mu[j] * s.mu[j] + 0.5 + rng.uniform();
        }

        const EmaLooResult got = ema_loo_rewards(s, b, ref);

        auto blend = [&](const MomentPair& m) {
            MomentPair out;
            out.mu.resize(d);
            out.sigma.resize(d);
            for (int j = 0; j < d; ++j) {
                const double mu = 0.5 * s.mu[j] + 0.5 * m.mu[j];
                const double m2 = 0.5 * s.m2[j] + 0.5 * (*m.m2)[j];
                out.mu[j] = mu;
                out.sigma[j] = std::sqrt(std::max(m2 - mu * mu, 0.0) + s.eps_var);
            }
            return out;
        };
        const double f_full = fid_diag(ref, blend(two_pass_moments(b, 0.0)));
        REQUIRE(std::abs(got.fid_full - f_full) < 1e-10);
        for (int i = 0; i < n; ++i) {
            const double f_i = fid_diag(ref, blend(two_pass_moments(drop_row(b, i), 0.0)));
            REQUIRE(std::abs(got.rewards[i] - (f_i - f_full)) < 1e-10);
        }
    }
}

TEST_CASE("ema_loo_rewards: full-update path is bit-identical to ema_update") {
    Rng rng(11);
    const FeatureBatch b = random_batch(rng, 8, 5);
    const MomentPair ref = ref_of(Vec64(5, 0.0), Vec64(5, 1.0));
    EmaMomentState s;
    s.alpha = 0.3;
    s.eps_var = 1e-6;
    s.initialized = true;
    s.mu.assign(5, 0.2);
    s.m2.assign(5, 1.5);
    const EmaLooResult got = ema_loo_rewards(s, b, ref);
    const MomentPair bm = batch_moments(b, s.eps_var);
    const EmaMomentState direct = ema_update(s, bm.mu, *bm.m2);
    CHECK(got.next_state.mu == direct.mu);
    CHECK(got.next_state.m2 == direct.m2);
}

TEST_CASE("variance clamp: adversarial cancellation stays at the floor") {
    // Large offset makes m2 - mu^2 cancel catastrophically; the clamp and
    // floor must keep sigma finite and >= sqrt(eps_var).
    const double big = 1e8;
    FeatureBatch b(3, 1);
    b.at(0, 0) = big;
    b.at(1, 0) = big;
    b.at(2, 0) = big;
    const double eps = 1e-6;
    const MomentPair m = batch_moments(b, eps);
    CHECK(std::isfinite(m.sigma[0]));
    CHECK(m.sigma[0] >= std::sqrt(eps) * (1.0 - 1e-12));

    EmaMomentState s;
    s.alpha = 0.5;
    s.eps_var = eps;
    s.initialized = true;
    s.mu = {big};
    s.m2 = {big * big * (1.0 - 1e-13)};  // slightly below mu^2
    const MomentPair derived = s.moments();
    CHECK(std::isfinite(derived.sigma[0]));
    CHECK(derived.sigma[0] >= std::sqrt(eps) * (1.0 - 1e-12));
}

TEST_CASE("reference_moments_from_samples: basic and permutation invariance") {
    const MomentPair m = reference_moments_from_samples(make_batch({{0.0, 0.0}, {2.0, 2.0}}));
    CHECK(m.mu[0] == 1.0);
    CHECK(m.sigma[0] == 1.0);

    Rng rng(12);
    FeatureBatch b = random_batch(rng, 32, 3);
    const MomentPair before = reference_moments_from_samples(b);
    // Reverse the row order; sums are evaluated in reversed order too, so
    // agreement is to rounding, not bitwise.
    FeatureBatch rev(b.n, b.d);
    for (int i = 0; i < b.n; ++i)
        for (int j = 0; j < b.d; ++j) rev.at(i, j) = b.at(b.n - 1 - i, j);
    const MomentPair after = reference_moments_from_samples(rev);
    for (int j = 0; j < b.d; ++j) {
        CHECK(before.mu[j] == doctest::Approx(after.mu[j]).epsilon(1e-13));
        CHECK(before.sigma[j] == doctest::Approx(after.sigma[j]).epsilon(1e-13));
    }
}

TEST_CASE("reference moments json round trip") {
    const MomentPair m = reference_moments_from_samples(make_batch({{0.0, 1.0}, {2.0, 3.0}}));
    const nlohmann::json doc = reference_to_json(m, "test", 2);
    CHECK(doc.at("dim") == 2);
    CHECK(doc.at("source") == "test");
    CHECK(doc.at("n_samples") == 2);
    const MomentPair back = reference_from_json(doc);
    CHECK(back.mu == m.mu);
    CHECK(back.sigma == m.sigma);
}

TEST_CASE("reference moments from 10k line samples are Monte-Carlo stable") {
    // Two independent draws of the dataset; per-coordinate sigma has a
    // standard error near 0.4% at this size, so agreement is to roughly
    // three significant digits.
    const MomentPair a = reference_moments_from_samples(line_dataset(10000, 2), 0.0);
    const MomentPair b = reference_moments_from_samples(line_dataset(10000, 3), 0.0);
    for (int j = 0; j < 2; ++j) {
        CHECK(std::abs(a.mu[j]) < 0.01);
        CHECK(std::abs(b.mu[j]) < 0.01);
        CHECK(std::abs(a.sigma[j] - b.sigma[j]) / a.sigma[j] < 0.005);
        CHECK(a.sigma[j] == doctest::Approx(0.5795112883571236).epsilon(0.01));
    }
}
