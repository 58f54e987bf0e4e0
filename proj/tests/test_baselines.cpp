#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "nofas/baselines.hpp"
#include "oracles.hpp"

using namespace nofas;
using namespace nofas::baselines;

namespace {

double std_normal_log_density(std::span<const double> z) {
    double acc = -0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi);
    for (double v : z) acc -= 0.5 * v * v;
    return acc;
}

}  // namespace

TEST_CASE("mh_step acceptance probabilities") {
    Rng rng = make_rng(1);
    const std::vector<double> z{0.0};
    const std::vector<double> prop_std{0.3};

    // Flat target: the ratio is one, every proposal is accepted.
    LogTarget flat = [](std::span<const double>) { return 0.0; };
    int accepted = 0;
    for (int i = 0; i < 500; ++i)
        if (mh_step(z, flat, prop_std, rng).accepted) ++accepted;
    CHECK(accepted == 500);

    // Target that doubles the density at any proposal: still always accepted.
    LogTarget improving = [&z](std::span<const double> x) {
        return x[0] == z[0] ? 0.0 : std::log(2.0);
    };
    accepted = 0;
    for (int i = 0; i < 500; ++i)
        if (mh_step(z, improving, prop_std, rng).accepted) ++accepted;
    CHECK(accepted == 500);

    // Halving the density accepts about half the time.
    LogTarget halving = [&z](std::span<const double> x) {
        return x[0] == z[0] ? 0.0 : std::log(0.5);
    };
    accepted = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i)
        if (mh_step(z, halving, prop_std, rng).accepted) ++accepted;
    const double rate = static_cast<double>(accepted) / n;
    CHECK(rate == doctest::Approx(0.5).epsilon(3.0 / std::sqrt(0.25 * n) / 0.5));
}

TEST_CASE("mh_run: moments of a standard normal target") {
    MhConfig cfg;
    cfg.dim = 2;
    cfg.proposal_std = {0.5, 0.5};
    cfg.iterations = 200000;
    cfg.burnin = 0.1;
    cfg.thinning = 10;
    cfg.n_chains = 1;
    cfg.seed = 42;
    MhResult res = mh_run([](std::span<const double> z) { return std_normal_log_density(z); },
                          cfg);
    CHECK(res.acceptance_rate > 0.3);
    CHECK(res.acceptance_rate < 0.9);
    const auto& chain = res.chains[0];
    const double n = static_cast<double>(chain.size());
    for (std::size_t d = 0; d < 2; ++d) {
        double mean = 0.0, var = 0.0;
        for (const auto& s : chain) mean += s[d];
        mean /= n;
        for (const auto& s : chain) var += (s[d] - mean) * (s[d] - mean);
        var /= n - 1.0;
        // autocorrelation after thinning is mild; allow 3 nominal std errors
        // with a small effective-sample-size haircut
        CHECK(std::abs(mean) < 3.0 * std::sqrt(var / n) * 2.0);
        CHECK(var == doctest::Approx(1.0).epsilon(0.15));
    }
}

TEST_CASE("mh_run: burn-in and thinning arithmetic reproduces 3600 samples") {
    MhConfig cfg;
    cfg.dim = 1;
    cfg.proposal_std = {1.0};
    cfg.iterations = 4000000;
    cfg.burnin = 0.1;
    cfg.thinning = 1000;
    cfg.seed = 7;
    MhResult res = mh_run([](std::span<const double> z) { return -0.5 * z[0] * z[0]; }, cfg);
    CHECK(res.retained_per_chain == 3600);

    cfg.iterations = 12345;
    cfg.thinning = 7;
    cfg.burnin = 0.25;
    MhResult odd = mh_run([](std::span<const double> z) { return -0.5 * z[0] * z[0]; }, cfg);
    const long burn = static_cast<long>(0.25 * 12345.0);
    CHECK(odd.retained_per_chain == (12345 - burn) / 7);
}

TEST_CASE("mh_run: zero-variance proposal keeps the chain constant") {
    MhConfig cfg;
    cfg.dim = 2;
    cfg.proposal_std = {0.0, 0.0};
    cfg.iterations = 5000;
    cfg.burnin = 0.0;
    cfg.thinning = 100;
    cfg.seed = 3;
    MhResult res = mh_run([](std::span<const double> z) { return std_normal_log_density(z); },
                          cfg);
    CHECK(res.acceptance_rate == 1.0);
    for (const auto& s : res.chains[0]) {
        CHECK(s[0] == 0.0);
        CHECK(s[1] == 0.0);
    }
}

TEST_CASE("mh_run: hard prior box confines the chain") {
    MhConfig cfg;
    cfg.dim = 1;
    cfg.proposal_std = {2.0};
    cfg.iterations = 20000;
    cfg.burnin = 0.1;
    cfg.thinning = 5;
    cfg.seed = 11;
    cfg.prior_box = {{-0.5, 0.5}};
    MhResult res = mh_run([](std::span<const double>) { return 0.0; }, cfg);
    for (const auto& s : res.chains[0]) {
        CHECK(s[0] >= -0.5);
        CHECK(s[0] <= 0.5);
    }
}

TEST_CASE("detailed balance on a two-state discretization") {
    // Symmetric bimodal target; states are the sign of z. At stationarity the
    // cross transition counts must balance.
    LogTarget bimodal = [](std::span<const double> z) {
        const double a = z[0] - 1.5, b = z[0] + 1.5;
        return std::log(0.5 * std::exp(-0.5 * a * a) + 0.5 * std::exp(-0.5 * b * b));
    };
    Rng rng = make_rng(19);
    std::vector<double> z{1.5};
    const std::vector<double> prop{1.2};
    long pos_to_neg = 0, neg_to_pos = 0, steps = 200000;
    for (long i = 0; i < steps; ++i) {
        const bool was_positive = z[0] > 0.0;
        z = mh_step(z, bimodal, prop, rng).state;
        const bool is_positive = z[0] > 0.0;
        if (was_positive && !is_positive) ++pos_to_neg;
        if (!was_positive && is_positive) ++neg_to_pos;
    }
    const double diff = std::abs(static_cast<double>(pos_to_neg - neg_to_pos));
    const double scale = std::sqrt(static_cast<double>(pos_to_neg + neg_to_pos));
    CHECK(diff < 3.0 * scale);
}

TEST_CASE("gelman-rubin: iid chains sit near one, separated chains do not") {
    Rng rng = make_rng(23);
    std::vector<std::vector<std::vector<double>>> chains(4);
    for (auto& c : chains)
        for (int i = 0; i < 10000; ++i) c.push_back({normal_draw(rng), normal_draw(rng)});
    auto rhat = gelman_rubin(chains);
    for (double v : rhat) {
        CHECK(v > 0.99);
        CHECK(v < 1.01);
    }

    std::vector<std::vector<std::vector<double>>> apart(2);
    for (int i = 0; i < 1000; ++i) {
        apart[0].push_back({normal_draw(rng)});
        apart[1].push_back({normal_draw(rng) + 50.0});
    }
    CHECK(gelman_rubin(apart)[0] > 10.0);

    std::vector<std::vector<std::vector<double>>> degenerate(
        2, std::vector<std::vector<double>>(100, {1.0}));
    CHECK(gelman_rubin(degenerate)[0] == 1.0);

    CHECK_THROWS_AS(gelman_rubin({chains[0]}), Error);
}

TEST_CASE("gelman-rubin is invariant under a common affine rescaling") {
    Rng rng = make_rng(29);
    std::vector<std::vector<std::vector<double>>> chains(3);
    for (std::size_t c = 0; c < 3; ++c)
        for (int i = 0; i < 2000; ++i)
            chains[c].push_back({normal_draw(rng, 0.1 * c, 1.0)});
    auto base = gelman_rubin(chains);
    auto scaled = chains;
    for (auto& c : scaled)
        for (auto& s : c) s[0] = 7.0 * s[0] - 11.0;
    auto after = gelman_rubin(scaled);
    CHECK(after[0] == doctest::Approx(base[0]).epsilon(1e-12));
}

namespace {

/// Conjugate 1-d setup: y_i ~ N(z, sigma^2), z ~ N(mu0, tau^2).
struct ConjugateCase {
    std::vector<double> y;
    double sigma, mu0, tau;
    double posterior_mean, posterior_std;

    TracedTarget target() const {
        return [this](const ad::Tensor& z) {
            const std::size_t b = z.shape()[0];
            ad::Tensor acc = ad::Tensor::zeros({b});
            ad::Tensor zc = ad::slice(z, 1, 0, 1);  // [b,1]
            for (double yi : y) {
                ad::Tensor r = ad::mul(ad::add(zc, -yi), 1.0 / sigma);
                acc = ad::add(acc, ad::mul(ad::sum(ad::square(r), 1), -0.5));
            }
            ad::Tensor pr = ad::mul(ad::add(zc, -mu0), 1.0 / tau);
            acc = ad::add(acc, ad::mul(ad::sum(ad::square(pr), 1), -0.5));
            const double norm =
                -0.5 * static_cast<double>(y.size() + 1) * std::log(2.0 * std::numbers::pi) -
                static_cast<double>(y.size()) * std::log(sigma) - std::log(tau);
            return ad::add(acc, norm);
        };
    }
};

ConjugateCase make_conjugate(std::uint64_t seed) {
    ConjugateCase c;
    c.sigma = 0.7;
    c.mu0 = -0.4;
    c.tau = 2.0;
    Rng rng = make_rng(seed);
    const double z_true = 1.1;
    for (int i = 0; i < 12; ++i) c.y.push_back(z_true + c.sigma * normal_draw(rng));
    const double prec = static_cast<double>(c.y.size()) / (c.sigma * c.sigma) +
                        1.0 / (c.tau * c.tau);
    double ysum = 0.0;
    for (double v : c.y) ysum += v;
    c.posterior_mean = (ysum / (c.sigma * c.sigma) + c.mu0 / (c.tau * c.tau)) / prec;
    c.posterior_std = std::sqrt(1.0 / prec);
    return c;
}

}  // namespace

TEST_CASE("bbvi recovers a conjugate gaussian posterior") {
    ConjugateCase c = make_conjugate(101);
    BbviConfig cfg;
    cfg.dim = 1;
    cfg.mc_samples = 20;
    cfg.iterations = 8000;
    cfg.lr = 0.05;
    cfg.lr_decay = 0.999;
    cfg.seed = 5;
    BbviResult fit = bbvi_run(c.target(), cfg);
    CHECK(std::abs(fit.mean[0] - c.posterior_mean) < 0.05 * c.posterior_std);
    CHECK(fit.std[0] == doctest::Approx(c.posterior_std).epsilon(0.10));
    CHECK(fit.correlation[0][0] == 1.0);
}

TEST_CASE("bbvi elbo approaches the log evidence when the family is exact") {
    // Target already a normalized 1-d Gaussian: optimal ELBO is log(1) = 0.
    TracedTarget gauss = [](const ad::Tensor& z) {
        ad::Tensor zc = ad::sum(ad::square(z), 1);
        return ad::add(ad::mul(zc, -0.5), -0.5 * std::log(2.0 * std::numbers::pi));
    };
    BbviConfig cfg;
    cfg.dim = 1;
    cfg.mc_samples = 50;
    cfg.iterations = 3000;
    cfg.lr = 0.03;
    cfg.lr_decay = 0.999;
    cfg.seed = 9;
    BbviResult fit = bbvi_run(gauss, cfg);
    double tail = 0.0;
    const std::size_t n = fit.elbo_trace.size();
    for (std::size_t i = n - 200; i < n; ++i) tail += fit.elbo_trace[i];
    CHECK(tail / 200.0 == doctest::Approx(0.0).epsilon(0.02));
    CHECK(std::abs(fit.mean[0]) < 0.05);
    CHECK(fit.std[0] == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("bbvi elbo moving average is non-decreasing over the final quarter") {
    ConjugateCase c = make_conjugate(77);
    BbviConfig cfg;
    cfg.dim = 1;
    cfg.mc_samples = 20;
    cfg.iterations = 4000;
    cfg.lr = 0.05;
    cfg.seed = 13;
    BbviResult fit = bbvi_run(c.target(), cfg);
    const auto& tr = fit.elbo_trace;
    const std::size_t w = 200;
    std::vector<double> ma;
    for (std::size_t i = w; i <= tr.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = i - w; j < i; ++j) s += tr[j];
        ma.push_back(s / w);
    }
    double lo = ma.front(), hi = ma.front();
    for (double v : ma) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double tol = 0.01 * (hi - lo);
    for (std::size_t i = ma.size() * 3 / 4; i + 1 < ma.size(); ++i)
        CHECK(ma[i + 1] >= ma[i] - tol);
}

TEST_CASE("bbvi sampling is deterministic per seed") {
    ConjugateCase c = make_conjugate(3);
    BbviConfig cfg;
    cfg.dim = 1;
    cfg.iterations = 200;
    cfg.seed = 21;
    BbviResult fit = bbvi_run(c.target(), cfg);
    auto a = bbvi_sample(fit, 20, 4);
    auto b = bbvi_sample(fit, 20, 4);
    CHECK(a == b);
}
