#ifndef NOFAS_EXPERIMENT_HPP
#define NOFAS_EXPERIMENT_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nofas/baselines.hpp"
#include "nofas/engine.hpp"

namespace nofas::experiment {

enum class Method { nofas, fixed_surrogate, mh, bbvi };
Method method_from_string(const std::string& s);
const char* to_string(Method m);

/// One experiment run, fully resolved: any key not present in a config file
/// is filled from the per-model defaults.
struct ExperimentConfig {
    std::string model;           // closed_form | rc | rcr | sobol
    Method method = Method::nofas;
    std::uint64_t seed = 0;
    std::string profile = "full";  // full | fast (label only; values are explicit)
    std::string waveform_csv;      // empty: bundled default inflow

    // flow
    std::string flow_type = "realnvp";
    std::size_t flow_layers = 5;
    std::size_t flow_hidden = 100;
    bool flow_batchnorm = true;
    bool flow_permute = true;
    std::string init_scheme = "glorot-uniform";

    // nofas / fixed-surrogate
    std::size_t batch_size = 200;
    long budget = 64;
    std::size_t calib_size = 2;
    long calib_interval = 1000;
    std::size_t memory_size = 20;
    double beta0 = 0.5;
    double beta1 = 0.1;
    long flow_iters = 25001;
    double flow_lr = 0.002;
    double flow_lr_decay = 0.9999;
    double surrogate_lr = 0.01;
    double surrogate_lr_decay = 0.999;
    long surrogate_iters = 1000;
    long surrogate_init_iters = 5000;
    double noise_eps = 0.1;
    std::size_t n_observations = 50;
    std::size_t n_posterior_samples = 5000;
    std::vector<std::size_t> pregrid_counts;  // empty: model/method default
    bool stop_on_convergence = false;
    std::size_t convergence_window = 100;
    double convergence_threshold = 5e-4;

    // mh
    long mh_iterations = 100000;
    std::vector<double> mh_proposal_std;
    double mh_burnin = 0.1;
    long mh_thinning = 1000;
    std::size_t mh_chains = 1;
    std::vector<std::size_t> mh_surrogate_grid;  // empty: evaluate the true model

    // bbvi
    long bbvi_iterations = 20000;
    std::size_t bbvi_mc_samples = 20;
    double bbvi_lr = 0.05;
    double bbvi_lr_decay = 0.9995;
    bool bbvi_use_surrogate = false;  // train the mh dense-grid surrogate first
};

/// Table-of-defaults entry point: the fully resolved config for a model and
/// method with no overrides.
ExperimentConfig default_config(const std::string& model, Method method = Method::nofas);

/// Flat `key = value` text, '#' comments. Unknown keys, unknown models or
/// malformed values fail with the offending line number. Missing keys take
/// the per-model defaults.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<string>");

/// Snapshot with every key explicit; parse_config(save_config(c)) == c.
std::string save_config(const ExperimentConfig& config);

/// Reduced-scale profile for CI: 3000 flow iterations, batches capped at 250,
/// calibration interval rescaled so the budget story is preserved.
void apply_fast_profile(ExperimentConfig& config);

struct RunOutcome {
    int exit_code = 0;
    std::string run_dir;
    std::string error;
    engine::RunRecord record;            // nofas / fixed-surrogate
    baselines::MhResult mh;              // mh
    baselines::BbviResult bbvi;          // bbvi
    double wall_seconds = 0.0;
};

/// Dispatches on the method, writes the RunRecord files plus summary.txt
/// under a fresh directory in out_root.
RunOutcome run_experiment(const ExperimentConfig& config, const std::string& out_root);

struct SweepSpec {
    ExperimentConfig base;
    std::string parameter;              // beta0 | beta1 | init_scheme | batch_size
    std::vector<std::string> values;
    std::string parameter2;             // optional second axis
    std::vector<std::string> values2;
    int repeats = 1;
};

/// Keys: config (path to base config), parameter, values, parameter2,
/// values2, repeats.
SweepSpec load_sweep(const std::string& path);

struct SweepCell {
    std::string value1, value2;
    int repeat = 0;
    std::uint64_t seed = 0;
    double final_loss = 0.0;
    long convergence_iteration = -1;  // -1: detector never fired
    double tail_std = 0.0;
    std::string status;  // ok | error message
};

struct SweepResult {
    std::vector<SweepCell> cells;
    std::string csv;
};

/// Per cell: final loss, convergence iteration, and the loss standard
/// deviation over the tail of the trace. Cell failures are recorded and the
/// sweep continues.
SweepResult run_sweep(const SweepSpec& spec, const std::string& out_root);

}  // namespace nofas::experiment

#endif
