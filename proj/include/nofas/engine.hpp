#ifndef NOFAS_ENGINE_HPP
#define NOFAS_ENGINE_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nofas/flows.hpp"
#include "nofas/models.hpp"
#include "nofas/surrogate.hpp"
#include "nofas/tensor.hpp"

namespace nofas::engine {

using ad::Tensor;
using TracedMap = std::function<Tensor(const Tensor&)>;

/// Gaussian likelihood of a latent batch given repeated observations with
/// known per-output standard deviations.
struct LikelihoodSpec {
    std::vector<std::vector<double>> observations;  // n x m
    std::vector<double> sigma;                      // m

    std::size_t n() const { return observations.size(); }
    std::size_t m() const { return sigma.size(); }
};

LikelihoodSpec make_likelihood(const models::ForwardModel& model, std::size_t n_obs,
                               std::uint64_t seed);

/// Per-sample log-likelihood of a [B, d] latent batch, differentiable through
/// the supplied forward map.
Tensor log_likelihood(const Tensor& z, const TracedMap& f, const LikelihoodSpec& spec);
/// Untraced log-likelihood of one output vector (fast path for samplers).
double log_likelihood_point(std::span<const double> outputs, const LikelihoodSpec& spec);

struct PriorSpec {
    models::PriorKind kind = models::PriorKind::improper_uniform;
    std::vector<std::pair<double, double>> box;
    double penalty = 100.0;  // quadratic penalty weight outside the box
};

PriorSpec prior_of(const models::ForwardModel& model);

/// Log prior per sample: 0 inside the box (and everywhere for the improper
/// prior), smooth quadratic penalty outside.
Tensor log_prior(const Tensor& z, const PriorSpec& prior);
double log_prior_point(std::span<const double> z, const PriorSpec& prior);

/// Monte-Carlo free-energy bound over one batch: mean(log q) - mean(loglik +
/// logprior). Differentiable in the flow parameters and through `f`.
struct FreeEnergy {
    Tensor loss;  // scalar
    flows::FlowSample sample;
};
FreeEnergy free_energy(const flows::FlowStack& stack, const LikelihoodSpec& spec,
                       const TracedMap& f, const PriorSpec& prior, std::size_t batch, Rng& rng,
                       bool train = true);

/// First iteration count t (1-based, t >= 2*window) at which the relative
/// change between consecutive window-averages of the trace falls below
/// `threshold`; nullopt when it never does.
std::optional<long> convergence_detector(const std::vector<double>& trace, std::size_t window,
                                         double threshold);

struct NoFasConfig {
    std::size_t batch_size = 200;
    long calib_interval = 1000;       // c
    std::size_t calib_size = 2;       // S_G
    std::size_t memory_size = 20;     // M
    double beta0 = 0.5;
    double beta1 = 0.1;
    long flow_iters = 25001;          // T_F
    long budget = 64;                 // max true-model evaluations
    double flow_lr = 0.002;
    double flow_lr_decay = 0.9999;
    surrogate::SurrogateTrainConfig surrogate_opt;      // per-calibration
    long surrogate_init_iters = 5000;                   // initial pre-grid fit
    double noise_eps = 0.1;
    std::size_t n_observations = 50;
    std::size_t n_posterior_samples = 5000;
    std::vector<std::size_t> pregrid_counts;            // empty: model default
    bool calibrate = true;                              // false: fixed surrogate
    bool stop_on_convergence = false;
    std::size_t convergence_window = 100;
    double convergence_threshold = 5e-4;
    std::uint64_t seed = 0;
};

struct RunRecord {
    std::vector<double> loss_trace;
    std::vector<double> lr_trace;
    std::vector<long> budget_trace;  // cumulative true-model calls
    long total_true_evals = 0;
    long calibration_count = 0;
    std::optional<long> convergence_iteration;
    std::vector<std::vector<double>> posterior_latent;
    std::vector<std::vector<double>> posterior_physical;
    std::vector<std::vector<double>> predictive;      // noised true-model outputs
    std::vector<std::vector<double>> predictive_raw;  // raw true-model outputs
    long predictive_skipped = 0;
    long validation_evals = 0;  // true-model calls outside the budget ledger
    std::vector<std::string> warnings;
    std::string error;  // non-empty when the run aborted
    bool failed() const { return !error.empty(); }
};

struct NoFasResult {
    RunRecord record;
    surrogate::SurrogateState state;
    LikelihoodSpec likelihood;
};

/// The full alternating optimization: initial pre-grid surrogate fit, flow
/// updates against the surrogate likelihood, periodic calibration with the
/// scheduler reset, exact budget accounting, final posterior and posterior
/// predictive sampling.
NoFasResult nofas_run(const models::ForwardModel& model, const NoFasConfig& config,
                      const flows::FlowSpec& flow_spec);

struct PredictiveSamples {
    std::vector<std::vector<double>> noised;
    std::vector<std::vector<double>> raw;
    long skipped = 0;
};

/// Evaluates the true model on posterior samples and applies the observation
/// noise recipe; samples outside the transform domain are skipped and counted.
PredictiveSamples posterior_predictive(const std::vector<std::vector<double>>& latent_samples,
                                       const models::ForwardModel& model, std::uint64_t seed);

}  // namespace nofas::engine

#endif
