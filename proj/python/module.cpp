// Python bindings for the main operations: forward models, pre-grids, flow
// sampling, samplers and the experiment runner.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nofas/baselines.hpp"
#include "nofas/engine.hpp"
#include "nofas/experiment.hpp"
#include "nofas/flows.hpp"
#include "nofas/surrogate.hpp"

namespace py = pybind11;
using namespace nofas;

namespace {

std::vector<std::vector<double>> tensor_rows(const ad::Tensor& t) {
    const std::size_t r = t.shape()[0], c = t.shape()[1];
    std::vector<std::vector<double>> out(r, std::vector<double>(c));
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i][j] = t.at(i, j);
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Variational inference with normalizing flows and an adaptive surrogate";

    m.def("model_names", [] {
        return std::vector<std::string>{"closed_form", "rc", "rcr", "sobol"};
    });

    m.def(
        "model_info",
        [](const std::string& name) {
            models::ForwardModel model = models::make_model(name);
            py::dict d;
            d["name"] = model.name;
            d["latent_dim"] = model.latent_dim;
            d["output_dim"] = model.output_dim;
            d["param_names"] = model.param_names;
            d["true_latent"] = model.true_latent;
            d["true_physical"] = model.true_physical;
            d["true_output"] = model.true_output;
            d["obs_sigma"] = model.obs_sigma;
            return d;
        },
        py::arg("name"));

    m.def(
        "evaluate",
        [](const std::string& name, const std::vector<double>& z_physical) {
            return models::make_model(name).eval_physical(z_physical);
        },
        py::arg("name"), py::arg("z_physical"),
        "Forward map in physical coordinates");

    m.def(
        "evaluate_latent",
        [](const std::string& name, const std::vector<double>& u) {
            return models::make_model(name).evaluate_latent(u);
        },
        py::arg("name"), py::arg("u"));

    m.def(
        "latent_to_physical",
        [](const std::string& name, const std::vector<double>& u) {
            return models::make_model(name).latent_to_physical(u);
        },
        py::arg("name"), py::arg("u"));

    m.def(
        "make_observations",
        [](const std::string& name, std::size_t n, std::uint64_t seed) {
            return models::make_observations(models::make_model(name), n, seed);
        },
        py::arg("name"), py::arg("n"), py::arg("seed"));

    m.def("sobol_ridge", [](double t) {
        auto z = models::sobol_ridge(t);
        return std::vector<double>(z.begin(), z.end());
    }, py::arg("t"));
    m.def("sobol_ridge_interval", [] { return models::sobol_ridge_interval(); });

    m.def("make_pregrid", &surrogate::make_pregrid, py::arg("bounds"), py::arg("counts"));

    m.def("gelman_rubin", &baselines::gelman_rubin, py::arg("chains"));

    m.def(
        "convergence_detector",
        [](const std::vector<double>& trace, std::size_t window,
           double threshold) -> py::object {
            auto fired = engine::convergence_detector(trace, window, threshold);
            if (!fired) return py::none();
            return py::int_(*fired);
        },
        py::arg("trace"), py::arg("window") = 100, py::arg("threshold") = 5e-4);

    m.def(
        "sample_flow",
        [](const std::string& kind, std::size_t dim, std::size_t layers, std::size_t hidden,
           std::uint64_t init_seed, std::size_t batch, std::uint64_t sample_seed) {
            flows::FlowSpec spec;
            spec.kind = flows::flow_kind_from_string(kind);
            spec.dim = dim;
            spec.n_affine_layers = layers;
            spec.hidden = hidden;
            flows::FlowStack stack = flows::init_flow(spec, init_seed);
            flows::FlowSample s = flows::flow_sample(stack, batch, sample_seed);
            py::dict d;
            d["z0"] = tensor_rows(s.z0);
            d["z_k"] = tensor_rows(s.z_k);
            d["log_q"] = std::vector<double>(s.log_q.data().begin(), s.log_q.data().end());
            return d;
        },
        py::arg("kind"), py::arg("dim"), py::arg("layers") = 5, py::arg("hidden") = 100,
        py::arg("init_seed") = 0, py::arg("batch") = 100, py::arg("sample_seed") = 0);

    m.def(
        "mh_run",
        [](const std::function<double(std::vector<double>)>& log_target, std::size_t dim,
           const std::vector<double>& proposal_std, long iterations, double burnin,
           long thinning, std::size_t chains, std::uint64_t seed) {
            baselines::MhConfig cfg;
            cfg.dim = dim;
            cfg.proposal_std = proposal_std;
            cfg.iterations = iterations;
            cfg.burnin = burnin;
            cfg.thinning = thinning;
            cfg.n_chains = chains;
            cfg.seed = seed;
            auto res = baselines::mh_run(
                [&log_target](std::span<const double> z) {
                    return log_target(std::vector<double>(z.begin(), z.end()));
                },
                cfg);
            py::dict d;
            d["chains"] = res.chains;
            d["acceptance_rate"] = res.acceptance_rate;
            d["retained_per_chain"] = res.retained_per_chain;
            return d;
        },
        py::arg("log_target"), py::arg("dim"), py::arg("proposal_std"),
        py::arg("iterations") = 10000, py::arg("burnin") = 0.1, py::arg("thinning") = 10,
        py::arg("chains") = 1, py::arg("seed") = 0);

    m.def(
        "validate_config",
        [](const std::string& text) {
            return experiment::save_config(experiment::parse_config(text));
        },
        py::arg("text"), "Resolve a config against the per-model defaults");

    m.def(
        "run_experiment",
        [](const std::string& config_text, const std::string& out_root, bool fast) {
            experiment::ExperimentConfig cfg = experiment::parse_config(config_text);
            if (fast) experiment::apply_fast_profile(cfg);
            auto outcome = experiment::run_experiment(cfg, out_root);
            py::dict d;
            d["exit_code"] = outcome.exit_code;
            d["run_dir"] = outcome.run_dir;
            d["error"] = outcome.error;
            d["wall_seconds"] = outcome.wall_seconds;
            return d;
        },
        py::arg("config_text"), py::arg("out_root"), py::arg("fast") = false);
}
