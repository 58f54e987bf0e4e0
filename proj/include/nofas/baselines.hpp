#ifndef NOFAS_BASELINES_HPP
#define NOFAS_BASELINES_HPP

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "nofas/engine.hpp"
#include "nofas/rng.hpp"

namespace nofas::baselines {

using LogTarget = std::function<double(std::span<const double>)>;

struct MhConfig {
    std::size_t dim = 2;
    std::vector<double> proposal_std;  // per-coordinate (diagonal covariance)
    long iterations = 100000;
    double burnin = 0.1;  // fraction
    long thinning = 1000;
    std::size_t n_chains = 1;
    std::uint64_t seed = 0;
    std::vector<std::pair<double, double>> prior_box;  // optional hard constraint
    std::vector<std::vector<double>> starts;           // optional per-chain starts
};

struct MhStepResult {
    std::vector<double> state;
    bool accepted = false;
};

/// Symmetric Gaussian proposal, so the acceptance ratio reduces to the target
/// ratio. A -inf proposal log-target is rejected outright.
MhStepResult mh_step(std::span<const double> z, const LogTarget& log_target,
                     std::span<const double> proposal_std, Rng& rng);

struct MhResult {
    std::vector<std::vector<std::vector<double>>> chains;  // chain -> sample -> coords
    double acceptance_rate = 0.0;
    long retained_per_chain = 0;
};

MhResult mh_run(const LogTarget& log_target, const MhConfig& config);

/// Potential scale reduction per dimension; degenerate chains (zero
/// within-chain variance) report 1.
std::vector<double> gelman_rubin(const std::vector<std::vector<std::vector<double>>>& chains);

/// Differentiable log-target over a latent batch [B, d] -> per-sample [B].
using TracedTarget = engine::TracedMap;

struct BbviConfig {
    std::size_t dim = 1;
    std::size_t mc_samples = 20;
    long iterations = 5000;
    double lr = 0.05;
    double lr_decay = 0.999;
    std::uint64_t seed = 0;
    std::vector<double> init_mean;     // defaults to zeros
    std::vector<double> init_log_std;  // defaults to zeros
};

struct BbviResult {
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<double> elbo_trace;
    /// Cross-correlations of the variational family are zero by construction
    /// (diagonal Gaussian); recorded explicitly for reporting.
    std::vector<std::vector<double>> correlation;
};

/// Mean-field Gaussian variational fit by stochastic maximization of the
/// ELBO with reparameterized gradients and RMSprop.
BbviResult bbvi_run(const TracedTarget& log_target, const BbviConfig& config);

/// Draws from the fitted diagonal Gaussian.
std::vector<std::vector<double>> bbvi_sample(const BbviResult& fit, std::size_t n,
                                             std::uint64_t seed);

}  // namespace nofas::baselines

#endif
