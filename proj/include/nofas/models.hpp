#ifndef NOFAS_MODELS_HPP
#define NOFAS_MODELS_HPP

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nofas/rng.hpp"
#include "nofas/tensor.hpp"

namespace nofas::models {

constexpr double kBaryePerMmHg = 1333.22;
constexpr double kDistalPressureMmHg = 55.0;

/// One heart cycle of aortic inflow; strictly increasing times with the last
/// sample closing the period (flow(last) == flow(first)).
class Waveform {
public:
    Waveform(std::vector<double> times, std::vector<double> flows);

    double period() const { return times_.back() - times_.front(); }
    double flow(double t) const;  // periodic linear interpolation, ml/s
    double mean_flow() const;     // exact trapezoid average over one period
    const std::vector<double>& times() const { return times_; }
    const std::vector<double>& flows() const { return flows_; }

    static const Waveform& default_inflow();
    /// Columns `time_s, flow_ml_s`, header row required.
    static Waveform from_csv(const std::string& path);

private:
    std::vector<double> times_, flows_;
};

using OdeRhs = std::function<void(double t, std::span<const double> y, std::span<double> dy)>;

struct OdeTrajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> states;
};

/// Classical fixed-step RK4; the final step is shortened to land on t1.
OdeTrajectory rk4_integrate(const OdeRhs& rhs, std::vector<double> y0, double t0, double t1,
                            double dt);

// f(z) = (z1^3/10 + exp(z2/3), z1^3/10 - exp(z2/3))
std::array<double, 2> closed_form_eval(const std::array<double, 2>& z);

struct PressureSummary {
    double min_mmHg = 0.0;
    double max_mmHg = 0.0;
    double mean_mmHg = 0.0;
};

struct CircuitSolveOptions {
    double steps_per_cycle = 1000;
    double cycle_tol_mmHg = 0.1;  // max allowed cycle-to-cycle pressure change
};

/// Two-element Windkessel. R in [100, 1500] Barye*s/ml, C in [1e-5, 1e-2]
/// ml/Barye; distal pressure held at 55 mmHg.
PressureSummary rc_eval(double R, double C, const Waveform& wave = Waveform::default_inflow(),
                        const CircuitSolveOptions& opts = {});

/// Three-element Windkessel with proximal/distal resistances.
PressureSummary rcr_eval(double Rp, double Rd, double C,
                         const Waveform& wave = Waveform::default_inflow(),
                         const CircuitSolveOptions& opts = {});

std::array<double, 4> sobol_eval(const std::array<double, 5>& z);
const std::array<double, 5>& sobol_a();
/// 4x5 output matrix (already divided by sqrt(2)), row-major.
const std::array<double, 20>& sobol_matrix();
/// Parameter curve mapping to the same output as z*; admissible t keeps
/// g(z*) + v*t inside the range of the Sobol g transform.
std::array<double, 5> sobol_ridge(double t);
/// Admissible (lower, upper) t range computed from the intersection of the
/// per-coordinate constraints.
std::pair<double, double> sobol_ridge_interval();

enum class PriorKind { improper_uniform, box_uniform };

/// A named benchmark inverse problem: deterministic forward map, latent to
/// physical transform, true parameters and the observation noise recipe.
class ForwardModel {
public:
    std::string name;
    std::size_t latent_dim = 0;
    std::size_t output_dim = 0;
    std::vector<std::string> param_names;
    std::vector<double> true_latent;
    std::vector<double> true_physical;
    std::vector<double> true_output;  // x* = f(z*)
    std::vector<double> obs_sigma;    // per-output observation std
    double noise_scale = 0.0;         // sigma_j = noise_scale * |x*_j|

    /// Empty when latent coordinates are the physical ones.
    std::vector<std::pair<double, double>> physical_bounds;
    std::vector<std::pair<double, double>> pregrid_bounds;  // latent space
    std::vector<std::size_t> pregrid_counts_adaptive;
    std::vector<std::size_t> pregrid_counts_fixed;

    PriorKind prior = PriorKind::improper_uniform;
    std::vector<std::pair<double, double>> prior_box;  // latent space

    std::function<std::vector<double>(std::span<const double>)> eval_physical;
    /// Batched traced evaluation in latent coordinates, when the map is
    /// expressible in tensor ops (closed_form, sobol).
    std::function<ad::Tensor(const ad::Tensor&)> traced_eval_latent;

    std::vector<double> latent_to_physical(std::span<const double> u) const;
    std::vector<double> physical_to_latent(std::span<const double> p) const;
    std::vector<double> evaluate_latent(std::span<const double> u) const;
};

ForwardModel make_closed_form_model();
ForwardModel make_rc_model(const Waveform& wave = Waveform::default_inflow());
ForwardModel make_rcr_model(const Waveform& wave = Waveform::default_inflow());
ForwardModel make_sobol_model();
/// closed_form | rc | rcr | sobol
ForwardModel make_model(const std::string& name);

/// n i.i.d. Gaussian observation rows with mean x* and std obs_sigma.
std::vector<std::vector<double>> make_observations(const ForwardModel& model, std::size_t n,
                                                   std::uint64_t seed);
/// As above for an arbitrary mean; scale 0 reproduces the mean exactly.
std::vector<std::vector<double>> make_observations(std::span<const double> x_star,
                                                   std::span<const double> sigma, std::size_t n,
                                                   std::uint64_t seed);

}  // namespace nofas::models

#endif
