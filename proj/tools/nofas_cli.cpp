// Experiment front end: run a single inference experiment, a hyperparameter
// sweep, or validate a config file.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "nofas/experiment.hpp"
#include "nofas/io.hpp"

namespace {

std::string default_out_root() {
    if (const char* env = std::getenv("NOFAS_OUT_ROOT")) return env;
    return "runs";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variational inference with normalizing flows and an adaptive surrogate"};
    app.require_subcommand(1);

    std::string config_path, out_root = default_out_root();
    long seed = -1;
    bool fast = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--out", out_root, "Output root directory");
        cmd->add_option("--seed", seed, "Override the config seed");
        cmd->add_flag("--fast", fast, "Reduced-scale profile for quick checks");
    };

    CLI::App* run = app.add_subcommand("run", "Run one experiment from a config file");
    run->add_option("config", config_path, "Path to the config file")->required();
    add_common(run);

    CLI::App* sweep = app.add_subcommand("sweep", "Run a hyperparameter sweep");
    sweep->add_option("spec", config_path, "Path to the sweep spec file")->required();
    add_common(sweep);

    CLI::App* validate = app.add_subcommand("validate", "Parse and echo a resolved config");
    validate->add_option("config", config_path, "Path to the config file")->required();
    add_common(validate);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(validate)) {
            nofas::experiment::ExperimentConfig cfg = nofas::experiment::load_config(config_path);
            if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
            if (fast) nofas::experiment::apply_fast_profile(cfg);
            std::cout << nofas::experiment::save_config(cfg);
            return 0;
        }
        if (app.got_subcommand(run)) {
            nofas::experiment::ExperimentConfig cfg = nofas::experiment::load_config(config_path);
            if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
            if (fast) nofas::experiment::apply_fast_profile(cfg);
            auto outcome = nofas::experiment::run_experiment(cfg, out_root);
            std::cout << "run directory: " << outcome.run_dir << "\n";
            if (outcome.exit_code != 0)
                std::cerr << "run failed: " << outcome.error << "\n";
            return outcome.exit_code;
        }
        // sweep
        nofas::experiment::SweepSpec spec = nofas::experiment::load_sweep(config_path);
        if (seed >= 0) spec.base.seed = static_cast<std::uint64_t>(seed);
        if (fast) nofas::experiment::apply_fast_profile(spec.base);
        auto result = nofas::experiment::run_sweep(spec, out_root);
        std::size_t failures = 0;
        for (const auto& c : result.cells)
            if (c.status != "ok") ++failures;
        std::cout << result.cells.size() << " sweep cells, " << failures << " failed\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
