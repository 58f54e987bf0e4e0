#include "nofas/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "nofas/optim.hpp"

namespace nofas::baselines {

MhStepResult mh_step(std::span<const double> z, const LogTarget& log_target,
                     std::span<const double> proposal_std, Rng& rng) {
    std::vector<double> proposal(z.begin(), z.end());
    for (std::size_t i = 0; i < proposal.size(); ++i)
        proposal[i] += proposal_std[i] * normal_draw(rng);
    const double cur = log_target(z);
    if (!std::isfinite(cur))
        throw Error("mh_step: log target is not finite at the current state");
    const double prop = log_target(proposal);
    const double log_ratio = prop - cur;
    bool accept = false;
    if (prop > -std::numeric_limits<double>::infinity()) {
        if (log_ratio >= 0.0)
            accept = true;
        else
            accept = std::log(uniform_draw(rng, 0.0, 1.0)) < log_ratio;
    }
    if (accept) return {std::move(proposal), true};
    return {std::vector<double>(z.begin(), z.end()), false};
}

namespace {

std::vector<double> chain_start(const MhConfig& config, std::size_t chain) {
    if (chain < config.starts.size()) return config.starts[chain];
    std::vector<double> z(config.dim, 0.0);
    if (chain == 0) return z;
    // Over-dispersed starts: walk the box corners (or unit corners without a box).
    for (std::size_t i = 0; i < config.dim; ++i) {
        const bool high = (chain >> i) & 1u;
        if (config.prior_box.empty()) {
            z[i] = high ? 1.0 : -1.0;
        } else {
            const auto [lo, hi] = config.prior_box[i];
            const double mid = 0.5 * (lo + hi);
            z[i] = mid + (high ? 0.45 : -0.45) * (hi - lo);
        }
    }
    return z;
}

}  // namespace

MhResult mh_run(const LogTarget& log_target, const MhConfig& config) {
    if (config.iterations < 1) throw Error("mh_run: iterations must be positive");
    if (config.thinning < 1) throw Error("mh_run: thinning must be >= 1");
    if (config.burnin < 0.0 || config.burnin >= 1.0)
        throw Error("mh_run: burn-in fraction must be in [0, 1)");
    if (config.proposal_std.size() != config.dim)
        throw Error("mh_run: proposal std dimension mismatch");

    LogTarget target = log_target;
    if (!config.prior_box.empty()) {
        auto box = config.prior_box;
        target = [box, log_target](std::span<const double> z) {
            for (std::size_t i = 0; i < z.size(); ++i)
                if (z[i] < box[i].first || z[i] > box[i].second)
                    return -std::numeric_limits<double>::infinity();
            return log_target(z);
        };
    }

    const long burn = static_cast<long>(config.burnin * static_cast<double>(config.iterations));
    MhResult out;
    long accepted = 0;
    for (std::size_t chain = 0; chain < config.n_chains; ++chain) {
        Rng rng = make_rng(config.seed + 1000003 * chain);
        std::vector<double> z = chain_start(config, chain);
        std::vector<std::vector<double>> kept;
        for (long it = 1; it <= config.iterations; ++it) {
            MhStepResult step = mh_step(z, target, config.proposal_std, rng);
            z = std::move(step.state);
            if (step.accepted) ++accepted;
            if (it > burn && (it - burn) % config.thinning == 0) kept.push_back(z);
        }
        out.chains.push_back(std::move(kept));
    }
    out.retained_per_chain = static_cast<long>(out.chains.front().size());
    out.acceptance_rate = static_cast<double>(accepted) /
                          static_cast<double>(config.iterations * config.n_chains);
    return out;
}

std::vector<double> gelman_rubin(const std::vector<std::vector<std::vector<double>>>& chains) {
    if (chains.size() < 2) throw Error("gelman_rubin: need at least 2 chains");
    const std::size_t m = chains.size();
    const std::size_t n = chains.front().size();
    if (n < 10) throw Error("gelman_rubin: chains must have length >= 10");
    for (const auto& c : chains)
        if (c.size() != n) throw Error("gelman_rubin: chains must have equal lengths");
    const std::size_t d = chains.front().front().size();

    std::vector<double> rhat(d, 1.0);
    for (std::size_t dim = 0; dim < d; ++dim) {
        std::vector<double> means(m, 0.0), vars(m, 0.0);
        for (std::size_t c = 0; c < m; ++c) {
            for (const auto& s : chains[c]) means[c] += s[dim];
            means[c] /= static_cast<double>(n);
            for (const auto& s : chains[c]) {
                const double dv = s[dim] - means[c];
                vars[c] += dv * dv;
            }
            vars[c] /= static_cast<double>(n - 1);
        }
        double w = 0.0;
        for (double v : vars) w += v;
        w /= static_cast<double>(m);
        double grand = 0.0;
        for (double v : means) grand += v;
        grand /= static_cast<double>(m);
        double b_over_n = 0.0;
        for (double v : means) b_over_n += (v - grand) * (v - grand);
        b_over_n /= static_cast<double>(m - 1);
        if (w <= 0.0) {
            rhat[dim] = 1.0;
            continue;
        }
        const double var_plus =
            (static_cast<double>(n - 1) / static_cast<double>(n)) * w + b_over_n;
        rhat[dim] = std::sqrt(var_plus / w);
    }
    return rhat;
}

// ---------------------------------------------------------------------------
// BBVI

BbviResult bbvi_run(const TracedTarget& log_target, const BbviConfig& config) {
    using ad::Tensor;
    if (config.mc_samples < 1) throw Error("bbvi: need at least one MC sample per step");
    const std::size_t d = config.dim;

    std::vector<double> mean0 = config.init_mean.empty() ? std::vector<double>(d, 0.0)
                                                         : config.init_mean;
    std::vector<double> logstd0 = config.init_log_std.empty() ? std::vector<double>(d, 0.0)
                                                              : config.init_log_std;
    Tensor mu({d}, mean0, true);
    Tensor log_std({d}, logstd0, true);
    ad::RmspropOptimizer opt({mu, log_std}, config.lr, config.lr_decay);

    Rng rng = make_rng(config.seed);
    BbviResult out;
    const std::size_t s = config.mc_samples;
    const double entropy_const =
        0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);

    for (long it = 0; it < config.iterations; ++it) {
        ad::Graph graph;
        Tensor u({s, d}, normal_vector(rng, s * d));
        Tensor sigma = ad::exp(log_std);
        Tensor z = ad::add(ad::mul(u, ad::broadcast(sigma, u.shape())),
                           ad::broadcast(mu, u.shape()));
        // log q(z) with z = mu + sigma*u: -(1/2)|u|^2 - sum(log sigma) - d/2 log(2pi)
        std::vector<double> uquad(s, 0.0);
        auto uv = u.data();
        for (std::size_t r = 0; r < s; ++r) {
            double acc = 0.0;
            for (std::size_t i = 0; i < d; ++i) acc += uv[r * d + i] * uv[r * d + i];
            uquad[r] = -0.5 * acc - entropy_const;
        }
        Tensor log_q = ad::sub(Tensor({s}, uquad), ad::broadcast(ad::sum(log_std), ad::Shape{s}));
        Tensor elbo = ad::mean(ad::sub(log_target(z), log_q));
        const double elbo_val = elbo.value();
        if (!std::isfinite(elbo_val))
            throw Error("bbvi: non-finite ELBO at iteration " + std::to_string(it));
        out.elbo_trace.push_back(elbo_val);
        auto grads = graph.backward(ad::neg(elbo));
        opt.step(grads);
    }

    out.mean.assign(mu.data().begin(), mu.data().end());
    out.std.resize(d);
    for (std::size_t i = 0; i < d; ++i) out.std[i] = std::exp(log_std.at(i));
    out.correlation.assign(d, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < d; ++i) out.correlation[i][i] = 1.0;
    return out;
}

std::vector<std::vector<double>> bbvi_sample(const BbviResult& fit, std::size_t n,
                                             std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::vector<std::vector<double>> out(n, std::vector<double>(fit.mean.size()));
    for (auto& row : out)
        for (std::size_t i = 0; i < row.size(); ++i)
            row[i] = fit.mean[i] + fit.std[i] * normal_draw(rng);
    return out;
}

}  // namespace nofas::baselines
