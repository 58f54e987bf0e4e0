#include "nofas/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <sstream>

#include "nofas/io.hpp"
#include "nofas/surrogate.hpp"

namespace nofas::experiment {

namespace fs = std::filesystem;

Method method_from_string(const std::string& s) {
    if (s == "nofas") return Method::nofas;
    if (s == "fixed-surrogate") return Method::fixed_surrogate;
    if (s == "mh") return Method::mh;
    if (s == "bbvi") return Method::bbvi;
    throw Error("unknown method '" + s + "' (valid: nofas, fixed-surrogate, mh, bbvi)");
}

const char* to_string(Method m) {
    switch (m) {
        case Method::nofas: return "nofas";
        case Method::fixed_surrogate: return "fixed-surrogate";
        case Method::mh: return "mh";
        case Method::bbvi: return "bbvi";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Key registry

namespace {

long to_long(const std::string& v) {
    std::size_t pos = 0;
    long out = std::stol(v, &pos);
    if (pos != v.size()) throw Error("trailing characters in integer '" + v + "'");
    return out;
}

std::size_t to_size(const std::string& v) {
    long out = to_long(v);
    if (out < 0) throw Error("expected a non-negative integer, got '" + v + "'");
    return static_cast<std::size_t>(out);
}

double to_double(const std::string& v) {
    std::size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw Error("trailing characters in number '" + v + "'");
    return out;
}

bool to_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw Error("expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty() || !out.empty()) out.push_back(cur);
    return out;
}

std::vector<std::size_t> to_sizes(const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& s : split_list(v)) out.push_back(to_size(s));
    return out;
}

std::vector<double> to_doubles(const std::string& v) {
    std::vector<double> out;
    for (const auto& s : split_list(v)) out.push_back(to_double(s));
    return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ',';
        if constexpr (std::is_same_v<T, double>)
            os << io::format_double(v[i]);
        else
            os << v[i];
    }
    return os.str();
}

struct KeyHandler {
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<std::pair<std::string, KeyHandler>>& key_registry() {
    static const std::vector<std::pair<std::string, KeyHandler>> reg = [] {
        std::vector<std::pair<std::string, KeyHandler>> r;
        auto add = [&r](const std::string& key, auto set, auto get) {
            r.push_back({key, KeyHandler{set, get}});
        };
        using C = ExperimentConfig;
        add("model", [](C& c, const std::string& v) { models::make_model(v); c.model = v; },
            [](const C& c) { return c.model; });
        add("method",
            [](C& c, const std::string& v) { c.method = method_from_string(v); },
            [](const C& c) { return std::string(to_string(c.method)); });
        add("seed", [](C& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(to_long(v)); },
            [](const C& c) { return std::to_string(c.seed); });
        add("profile",
            [](C& c, const std::string& v) {
                if (v != "full" && v != "fast") throw Error("profile must be full or fast");
                c.profile = v;
            },
            [](const C& c) { return c.profile; });
        add("waveform_csv", [](C& c, const std::string& v) { c.waveform_csv = v; },
            [](const C& c) { return c.waveform_csv; });
        add("flow_type",
            [](C& c, const std::string& v) { flows::flow_kind_from_string(v); c.flow_type = v; },
            [](const C& c) { return c.flow_type; });
        add("flow_layers", [](C& c, const std::string& v) { c.flow_layers = to_size(v); },
            [](const C& c) { return std::to_string(c.flow_layers); });
        add("flow_hidden", [](C& c, const std::string& v) { c.flow_hidden = to_size(v); },
            [](const C& c) { return std::to_string(c.flow_hidden); });
        add("flow_batchnorm", [](C& c, const std::string& v) { c.flow_batchnorm = to_bool(v); },
            [](const C& c) { return std::string(c.flow_batchnorm ? "true" : "false"); });
        add("flow_permute", [](C& c, const std::string& v) { c.flow_permute = to_bool(v); },
            [](const C& c) { return std::string(c.flow_permute ? "true" : "false"); });
        add("init_scheme",
            [](C& c, const std::string& v) { nn::init_scheme_from_string(v); c.init_scheme = v; },
            [](const C& c) { return c.init_scheme; });
        add("batch_size", [](C& c, const std::string& v) { c.batch_size = to_size(v); },
            [](const C& c) { return std::to_string(c.batch_size); });
        add("budget", [](C& c, const std::string& v) { c.budget = to_long(v); },
            [](const C& c) { return std::to_string(c.budget); });
        add("calib_size", [](C& c, const std::string& v) { c.calib_size = to_size(v); },
            [](const C& c) { return std::to_string(c.calib_size); });
        add("calib_interval", [](C& c, const std::string& v) { c.calib_interval = to_long(v); },
            [](const C& c) { return std::to_string(c.calib_interval); });
        add("memory_size", [](C& c, const std::string& v) { c.memory_size = to_size(v); },
            [](const C& c) { return std::to_string(c.memory_size); });
        add("beta0",
            [](C& c, const std::string& v) {
                const double b = to_double(v);
                if (b <= 0.0 || b >= 1.0) throw Error("beta0 must be in (0, 1)");
                c.beta0 = b;
            },
            [](const C& c) { return io::format_double(c.beta0); });
        add("beta1",
            [](C& c, const std::string& v) {
                const double b = to_double(v);
                if (b <= 0.0) throw Error("beta1 must be positive");
                c.beta1 = b;
            },
            [](const C& c) { return io::format_double(c.beta1); });
        add("flow_iters", [](C& c, const std::string& v) { c.flow_iters = to_long(v); },
            [](const C& c) { return std::to_string(c.flow_iters); });
        add("flow_lr", [](C& c, const std::string& v) { c.flow_lr = to_double(v); },
            [](const C& c) { return io::format_double(c.flow_lr); });
        add("flow_lr_decay", [](C& c, const std::string& v) { c.flow_lr_decay = to_double(v); },
            [](const C& c) { return io::format_double(c.flow_lr_decay); });
        add("surrogate_lr", [](C& c, const std::string& v) { c.surrogate_lr = to_double(v); },
            [](const C& c) { return io::format_double(c.surrogate_lr); });
        add("surrogate_lr_decay",
            [](C& c, const std::string& v) { c.surrogate_lr_decay = to_double(v); },
            [](const C& c) { return io::format_double(c.surrogate_lr_decay); });
        add("surrogate_iters", [](C& c, const std::string& v) { c.surrogate_iters = to_long(v); },
            [](const C& c) { return std::to_string(c.surrogate_iters); });
        add("surrogate_init_iters",
            [](C& c, const std::string& v) { c.surrogate_init_iters = to_long(v); },
            [](const C& c) { return std::to_string(c.surrogate_init_iters); });
        add("noise_eps", [](C& c, const std::string& v) { c.noise_eps = to_double(v); },
            [](const C& c) { return io::format_double(c.noise_eps); });
        add("n_observations", [](C& c, const std::string& v) { c.n_observations = to_size(v); },
            [](const C& c) { return std::to_string(c.n_observations); });
        add("n_posterior_samples",
            [](C& c, const std::string& v) { c.n_posterior_samples = to_size(v); },
            [](const C& c) { return std::to_string(c.n_posterior_samples); });
        add("pregrid_counts", [](C& c, const std::string& v) { c.pregrid_counts = to_sizes(v); },
            [](const C& c) { return join(c.pregrid_counts); });
        add("stop_on_convergence",
            [](C& c, const std::string& v) { c.stop_on_convergence = to_bool(v); },
            [](const C& c) { return std::string(c.stop_on_convergence ? "true" : "false"); });
        add("convergence_window",
            [](C& c, const std::string& v) { c.convergence_window = to_size(v); },
            [](const C& c) { return std::to_string(c.convergence_window); });
        add("convergence_threshold",
            [](C& c, const std::string& v) { c.convergence_threshold = to_double(v); },
            [](const C& c) { return io::format_double(c.convergence_threshold); });
        add("mh_iterations", [](C& c, const std::string& v) { c.mh_iterations = to_long(v); },
            [](const C& c) { return std::to_string(c.mh_iterations); });
        add("mh_proposal_std",
            [](C& c, const std::string& v) { c.mh_proposal_std = to_doubles(v); },
            [](const C& c) { return join(c.mh_proposal_std); });
        add("mh_burnin", [](C& c, const std::string& v) { c.mh_burnin = to_double(v); },
            [](const C& c) { return io::format_double(c.mh_burnin); });
        add("mh_thinning", [](C& c, const std::string& v) { c.mh_thinning = to_long(v); },
            [](const C& c) { return std::to_string(c.mh_thinning); });
        add("mh_chains", [](C& c, const std::string& v) { c.mh_chains = to_size(v); },
            [](const C& c) { return std::to_string(c.mh_chains); });
        add("mh_surrogate_grid",
            [](C& c, const std::string& v) { c.mh_surrogate_grid = to_sizes(v); },
            [](const C& c) { return join(c.mh_surrogate_grid); });
        add("bbvi_iterations", [](C& c, const std::string& v) { c.bbvi_iterations = to_long(v); },
            [](const C& c) { return std::to_string(c.bbvi_iterations); });
        add("bbvi_mc_samples", [](C& c, const std::string& v) { c.bbvi_mc_samples = to_size(v); },
            [](const C& c) { return std::to_string(c.bbvi_mc_samples); });
        add("bbvi_lr", [](C& c, const std::string& v) { c.bbvi_lr = to_double(v); },
            [](const C& c) { return io::format_double(c.bbvi_lr); });
        add("bbvi_lr_decay", [](C& c, const std::string& v) { c.bbvi_lr_decay = to_double(v); },
            [](const C& c) { return io::format_double(c.bbvi_lr_decay); });
        add("bbvi_use_surrogate",
            [](C& c, const std::string& v) { c.bbvi_use_surrogate = to_bool(v); },
            [](const C& c) { return std::string(c.bbvi_use_surrogate ? "true" : "false"); });
        return r;
    }();
    return reg;
}

const KeyHandler* find_key(const std::string& key) {
    for (const auto& [k, h] : key_registry())
        if (k == key) return &h;
    return nullptr;
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::pair<std::string, std::string>> parse_kv(const std::string& text,
                                                          const std::string& origin) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw Error(origin + ":" + std::to_string(lineno) + ": empty key");
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Defaults

ExperimentConfig default_config(const std::string& model, Method method) {
    models::ForwardModel m = models::make_model(model);
    ExperimentConfig c;
    c.model = model;
    c.method = method;

    if (model == "closed_form") {
        c.flow_type = "realnvp";
        c.flow_layers = 5;
        c.batch_size = 200;
        c.budget = 64;
        c.calib_size = 2;
        c.calib_interval = 1000;
        c.flow_lr = 0.002;
        c.mh_proposal_std = {0.1, 0.1};
        c.mh_iterations = 4000000;
        c.mh_thinning = 1000;
    } else if (model == "rc") {
        c.flow_type = "maf";
        c.flow_layers = 5;
        c.batch_size = 250;
        c.budget = 64;
        c.calib_size = 2;
        c.calib_interval = 1000;
        c.flow_lr = 0.003;
        c.mh_proposal_std = {0.1, std::sqrt(0.1)};
        c.mh_iterations = 2000000;
        c.mh_thinning = 1000;
        c.mh_surrogate_grid = {30, 30};
        c.bbvi_use_surrogate = true;
    } else if (model == "rcr") {
        c.flow_type = "maf";
        c.flow_layers = 15;
        c.batch_size = 500;
        c.budget = 216;
        c.calib_size = 2;
        c.calib_interval = 300;
        c.flow_lr = 0.003;
        c.mh_proposal_std = std::vector<double>(3, std::sqrt(0.025));
        c.mh_iterations = 4000000;
        c.mh_thinning = 2000;
        c.mh_surrogate_grid = {20, 20, 20};
        c.bbvi_use_surrogate = true;
    } else if (model == "sobol") {
        c.flow_type = "realnvp";
        c.flow_layers = 15;
        c.batch_size = 250;
        c.budget = 1023;
        c.calib_size = 12;
        c.calib_interval = 250;
        c.flow_lr = 0.0005;
        c.mh_proposal_std = std::vector<double>(5, std::sqrt(0.03));
        c.mh_iterations = 600000000;
        c.mh_thinning = 100000;
    }
    c.mh_chains = 4;

    if (method == Method::fixed_surrogate) {
        c.pregrid_counts = m.pregrid_counts_fixed;
        long grid = 1;
        for (std::size_t n : c.pregrid_counts) grid *= static_cast<long>(n);
        c.budget = grid;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Parse / save

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
    auto kvs = parse_kv(text, origin);
    std::string model, method = "nofas";
    for (const auto& [k, v] : kvs) {
        if (!find_key(k)) throw Error(origin + ": unknown key '" + k + "'");
        if (k == "model") model = v;
        if (k == "method") method = v;
    }
    if (model.empty()) throw Error(origin + ": missing required key 'model'");

    ExperimentConfig cfg = default_config(model, method_from_string(method));
    for (const auto& [k, v] : kvs) {
        const KeyHandler* h = find_key(k);
        try {
            h->set(cfg, v);
        } catch (const std::exception& e) {
            throw Error(origin + ": key '" + k + "': " + e.what());
        }
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    return parse_config(io::read_text_file(path), path);
}

std::string save_config(const ExperimentConfig& config) {
    std::ostringstream os;
    for (const auto& [k, h] : key_registry()) os << k << " = " << h.get(config) << "\n";
    return os.str();
}

void apply_fast_profile(ExperimentConfig& config) {
    const double scale = 3000.0 / static_cast<double>(config.flow_iters);
    config.calib_interval = std::max<long>(
        1, static_cast<long>(std::llround(static_cast<double>(config.calib_interval) * scale)));
    config.flow_iters = 3000;
    config.batch_size = std::min<std::size_t>(config.batch_size, 250);
    config.mh_iterations = std::max<long>(10000, config.mh_iterations / 20);
    config.mh_thinning = std::max<long>(1, config.mh_thinning / 20);
    config.bbvi_iterations = std::min<long>(config.bbvi_iterations, 5000);
    config.profile = "fast";
}

// ---------------------------------------------------------------------------
// Runner

namespace {

models::ForwardModel build_model(const ExperimentConfig& config) {
    if (!config.waveform_csv.empty() && (config.model == "rc" || config.model == "rcr")) {
        models::Waveform wave = models::Waveform::from_csv(config.waveform_csv);
        return config.model == "rc" ? models::make_rc_model(wave) : models::make_rcr_model(wave);
    }
    return models::make_model(config.model);
}

engine::NoFasConfig to_engine_config(const ExperimentConfig& c,
                                     const models::ForwardModel& model) {
    engine::NoFasConfig e;
    e.batch_size = c.batch_size;
    e.calib_interval = c.calib_interval;
    e.calib_size = c.calib_size;
    e.memory_size = c.memory_size;
    e.beta0 = c.beta0;
    e.beta1 = c.beta1;
    e.flow_iters = c.flow_iters;
    e.budget = c.budget;
    e.flow_lr = c.flow_lr;
    e.flow_lr_decay = c.flow_lr_decay;
    e.surrogate_opt.iterations = c.surrogate_iters;
    e.surrogate_opt.lr = c.surrogate_lr;
    e.surrogate_opt.lr_decay = c.surrogate_lr_decay;
    e.surrogate_init_iters = c.surrogate_init_iters;
    e.noise_eps = c.noise_eps;
    e.n_observations = c.n_observations;
    e.n_posterior_samples = c.n_posterior_samples;
    e.pregrid_counts = c.pregrid_counts.empty()
                           ? (c.method == Method::fixed_surrogate ? model.pregrid_counts_fixed
                                                                  : model.pregrid_counts_adaptive)
                           : c.pregrid_counts;
    e.calibrate = c.method == Method::nofas;
    e.stop_on_convergence = c.stop_on_convergence;
    e.convergence_window = c.convergence_window;
    e.convergence_threshold = c.convergence_threshold;
    e.seed = c.seed;
    return e;
}

flows::FlowSpec to_flow_spec(const ExperimentConfig& c, const models::ForwardModel& model) {
    flows::FlowSpec s;
    s.kind = flows::flow_kind_from_string(c.flow_type);
    s.dim = model.latent_dim;
    s.n_affine_layers = c.flow_layers;
    s.hidden = c.flow_hidden;
    s.batchnorm = c.flow_batchnorm;
    s.permute = c.flow_permute;
    s.init = nn::init_scheme_from_string(c.init_scheme);
    return s;
}

std::vector<std::string> sample_header(const models::ForwardModel& model) {
    std::vector<std::string> h;
    for (std::size_t i = 0; i < model.latent_dim; ++i) h.push_back("z" + std::to_string(i + 1));
    for (const auto& name : model.param_names) h.push_back(name + "_phys");
    return h;
}

std::vector<std::vector<double>> zip_latent_physical(
    const std::vector<std::vector<double>>& latent,
    const std::vector<std::vector<double>>& physical) {
    std::vector<std::vector<double>> rows;
    rows.reserve(latent.size());
    for (std::size_t i = 0; i < latent.size(); ++i) {
        std::vector<double> row = latent[i];
        row.insert(row.end(), physical[i].begin(), physical[i].end());
        rows.push_back(std::move(row));
    }
    return rows;
}

void summarize_samples(std::ostringstream& os, const models::ForwardModel& model,
                       const std::vector<std::vector<double>>& latent) {
    if (latent.empty()) return;
    const std::size_t d = model.latent_dim;
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    for (const auto& s : latent)
        for (std::size_t i = 0; i < d; ++i) mean[i] += s[i];
    for (double& v : mean) v /= static_cast<double>(latent.size());
    for (const auto& s : latent)
        for (std::size_t i = 0; i < d; ++i) sd[i] += (s[i] - mean[i]) * (s[i] - mean[i]);
    for (double& v : sd) v = std::sqrt(v / static_cast<double>(latent.size()));
    os << "posterior_mean_latent =";
    for (double v : mean) os << ' ' << io::format_double(v);
    os << "\nposterior_std_latent =";
    for (double v : sd) os << ' ' << io::format_double(v);
    os << "\n";
    double dist = 0.0;
    for (std::size_t i = 0; i < d; ++i)
        dist += (mean[i] - model.true_latent[i]) * (mean[i] - model.true_latent[i]);
    os << "latent_mean_error = " << io::format_double(std::sqrt(dist)) << "\n";
}

surrogate::SurrogateNet dense_grid_surrogate(const models::ForwardModel& model,
                                             const std::vector<std::size_t>& grid_counts,
                                             long init_iters, double lr, double decay,
                                             std::uint64_t seed) {
    auto grid = surrogate::make_pregrid(model.pregrid_bounds, grid_counts);
    std::vector<std::vector<double>> outputs;
    outputs.reserve(grid.size());
    for (const auto& p : grid) outputs.push_back(model.evaluate_latent(p));
    surrogate::SurrogateNet net(model.latent_dim, model.output_dim, seed);
    net.fit_standardization(outputs);
    net.fit_input_standardization(grid);
    surrogate::CalibrationMemory memory(1);
    memory.set_pregrid(std::move(grid), std::move(outputs));
    surrogate::SurrogateTrainConfig cfg;
    cfg.iterations = init_iters;
    cfg.lr = lr;
    cfg.lr_decay = decay;
    surrogate::initial_fit(net, memory, cfg);
    return net;
}

void run_flow_method(const ExperimentConfig& config, const models::ForwardModel& model,
                     const std::string& dir, RunOutcome& out) {
    engine::NoFasConfig ecfg = to_engine_config(config, model);
    flows::FlowSpec spec = to_flow_spec(config, model);
    engine::NoFasResult result = engine::nofas_run(model, ecfg, spec);
    out.record = std::move(result.record);
    const engine::RunRecord& rec = out.record;

    {
        std::vector<std::vector<double>> rows;
        rows.reserve(rec.loss_trace.size());
        for (std::size_t i = 0; i < rec.loss_trace.size(); ++i)
            rows.push_back({static_cast<double>(i + 1), rec.loss_trace[i], rec.lr_trace[i],
                            static_cast<double>(rec.budget_trace[i])});
        io::write_text_file(dir + "/loss_trace.csv",
                            io::matrix_csv({"iteration", "loss", "lr", "budget_used"}, rows));
    }
    io::write_text_file(dir + "/posterior_samples.csv",
                        io::matrix_csv(sample_header(model),
                                       zip_latent_physical(rec.posterior_latent,
                                                           rec.posterior_physical)));
    {
        std::vector<std::string> header;
        for (std::size_t j = 0; j < model.output_dim; ++j)
            header.push_back("x" + std::to_string(j + 1));
        for (std::size_t j = 0; j < model.output_dim; ++j)
            header.push_back("raw_x" + std::to_string(j + 1));
        io::write_text_file(dir + "/predictive_samples.csv",
                            io::matrix_csv(header,
                                           zip_latent_physical(rec.predictive,
                                                               rec.predictive_raw)));
    }
    io::write_text_file(dir + "/memory.csv", surrogate::memory_csv(result.state.memory));

    if (rec.failed()) {
        out.exit_code = 1;
        out.error = rec.error;
    }
}

void run_mh_method(const ExperimentConfig& config, const models::ForwardModel& model,
                   const std::string& dir, RunOutcome& out, std::ostringstream& summary) {
    engine::LikelihoodSpec lik =
        engine::make_likelihood(model, config.n_observations, config.seed + 2);
    const engine::PriorSpec prior = engine::prior_of(model);

    std::optional<surrogate::SurrogateNet> net;
    if (!config.mh_surrogate_grid.empty())
        net = dense_grid_surrogate(model, config.mh_surrogate_grid, config.surrogate_init_iters,
                                   config.surrogate_lr, config.surrogate_lr_decay,
                                   config.seed + 21);

    baselines::LogTarget target = [&](std::span<const double> z) {
        std::vector<double> outputs =
            net ? net->predict(z) : model.evaluate_latent(z);
        return engine::log_likelihood_point(outputs, lik) + engine::log_prior_point(z, prior);
    };

    baselines::MhConfig mcfg;
    mcfg.dim = model.latent_dim;
    mcfg.proposal_std = config.mh_proposal_std;
    mcfg.iterations = config.mh_iterations;
    mcfg.burnin = config.mh_burnin;
    mcfg.thinning = config.mh_thinning;
    mcfg.n_chains = config.mh_chains;
    mcfg.seed = config.seed + 31;
    mcfg.prior_box = model.prior_box;
    out.mh = baselines::mh_run(target, mcfg);

    {
        std::vector<std::string> header{"chain", "iteration"};
        for (std::size_t i = 0; i < model.latent_dim; ++i)
            header.push_back("z" + std::to_string(i + 1));
        std::vector<std::vector<double>> rows;
        for (std::size_t c = 0; c < out.mh.chains.size(); ++c)
            for (std::size_t i = 0; i < out.mh.chains[c].size(); ++i) {
                std::vector<double> row{static_cast<double>(c), static_cast<double>(i)};
                row.insert(row.end(), out.mh.chains[c][i].begin(), out.mh.chains[c][i].end());
                rows.push_back(std::move(row));
            }
        io::write_text_file(dir + "/chains.csv", io::matrix_csv(header, rows));
    }
    std::vector<std::vector<double>> pooled, pooled_phys;
    for (const auto& chain : out.mh.chains)
        for (const auto& s : chain) {
            pooled.push_back(s);
            std::vector<double> clamped = s;
            for (double& v : clamped) v = std::clamp(v, -5.0, 5.0);
            pooled_phys.push_back(model.latent_to_physical(clamped));
        }
    io::write_text_file(dir + "/posterior_samples.csv",
                        io::matrix_csv(sample_header(model),
                                       zip_latent_physical(pooled, pooled_phys)));

    summary << "acceptance_rate = " << io::format_double(out.mh.acceptance_rate) << "\n";
    summary << "retained_per_chain = " << out.mh.retained_per_chain << "\n";
    if (out.mh.chains.size() >= 2 && out.mh.retained_per_chain >= 10) {
        auto rhat = baselines::gelman_rubin(out.mh.chains);
        summary << "gelman_rubin =";
        for (double v : rhat) summary << ' ' << io::format_double(v);
        summary << "\n";
    }
    summarize_samples(summary, model, pooled);
}

void run_bbvi_method(const ExperimentConfig& config, const models::ForwardModel& model,
                     const std::string& dir, RunOutcome& out, std::ostringstream& summary) {
    engine::LikelihoodSpec lik =
        engine::make_likelihood(model, config.n_observations, config.seed + 2);
    const engine::PriorSpec prior = engine::prior_of(model);

    std::optional<surrogate::SurrogateNet> net;
    engine::TracedMap fhat;
    if (config.bbvi_use_surrogate) {
        std::vector<std::size_t> grid = config.mh_surrogate_grid;
        if (grid.empty()) grid.assign(model.latent_dim, 20);
        net = dense_grid_surrogate(model, grid, config.surrogate_init_iters, config.surrogate_lr,
                                   config.surrogate_lr_decay, config.seed + 21);
        fhat = [&n = *net](const ad::Tensor& z) { return n.forward(z); };
    } else if (model.traced_eval_latent) {
        fhat = model.traced_eval_latent;
    } else {
        throw Error("bbvi: model has no differentiable evaluation; enable bbvi_use_surrogate");
    }

    baselines::TracedTarget target = [&](const ad::Tensor& z) {
        return ad::add(engine::log_likelihood(z, fhat, lik), engine::log_prior(z, prior));
    };

    baselines::BbviConfig bcfg;
    bcfg.dim = model.latent_dim;
    bcfg.mc_samples = config.bbvi_mc_samples;
    bcfg.iterations = config.bbvi_iterations;
    bcfg.lr = config.bbvi_lr;
    bcfg.lr_decay = config.bbvi_lr_decay;
    bcfg.seed = config.seed + 41;
    out.bbvi = baselines::bbvi_run(target, bcfg);

    {
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < out.bbvi.elbo_trace.size(); ++i)
            rows.push_back({static_cast<double>(i + 1), out.bbvi.elbo_trace[i]});
        io::write_text_file(dir + "/elbo_trace.csv",
                            io::matrix_csv({"iteration", "elbo"}, rows));
    }
    auto samples = baselines::bbvi_sample(out.bbvi, config.n_posterior_samples, config.seed + 5);
    std::vector<std::vector<double>> physical;
    physical.reserve(samples.size());
    for (const auto& s : samples) {
        std::vector<double> clamped = s;
        for (double& v : clamped) v = std::clamp(v, -5.0, 5.0);
        physical.push_back(model.latent_to_physical(clamped));
    }
    io::write_text_file(dir + "/posterior_samples.csv",
                        io::matrix_csv(sample_header(model),
                                       zip_latent_physical(samples, physical)));

    summary << "variational_mean =";
    for (double v : out.bbvi.mean) summary << ' ' << io::format_double(v);
    summary << "\nvariational_std =";
    for (double v : out.bbvi.std) summary << ' ' << io::format_double(v);
    summary << "\nfinal_elbo = " << io::format_double(out.bbvi.elbo_trace.back()) << "\n";
    summary << "cross_correlation = 0 (diagonal Gaussian family)\n";
    summarize_samples(summary, model, samples);
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& config, const std::string& out_root) {
    const auto t0 = std::chrono::steady_clock::now();
    RunOutcome out;
    out.run_dir = io::create_run_directory(
        out_root, config.model + "-" + to_string(config.method));
    io::write_text_file(out.run_dir + "/config.snapshot", save_config(config));

    std::ostringstream summary;
    summary << "model = " << config.model << "\nmethod = " << to_string(config.method)
            << "\nseed = " << config.seed << "\nprofile = " << config.profile << "\n";
    try {
        models::ForwardModel model = build_model(config);
        switch (config.method) {
            case Method::nofas:
            case Method::fixed_surrogate: {
                run_flow_method(config, model, out.run_dir, out);
                const engine::RunRecord& rec = out.record;
                summary << "budget_used = " << rec.total_true_evals << "\n";
                summary << "calibrations = " << rec.calibration_count << "\n";
                if (!rec.loss_trace.empty())
                    summary << "final_loss = " << io::format_double(rec.loss_trace.back())
                            << "\n";
                summary << "convergence_iteration = "
                        << (rec.convergence_iteration ? std::to_string(*rec.convergence_iteration)
                                                      : std::string("none"))
                        << "\n";
                summary << "predictive_skipped = " << rec.predictive_skipped << "\n";
                summarize_samples(summary, model, rec.posterior_latent);
                for (const auto& w : rec.warnings) summary << "warning = " << w << "\n";
                if (rec.failed()) summary << "error = " << rec.error << "\n";
                break;
            }
            case Method::mh:
                run_mh_method(config, model, out.run_dir, out, summary);
                break;
            case Method::bbvi:
                run_bbvi_method(config, model, out.run_dir, out, summary);
                break;
        }
    } catch (const std::exception& e) {
        out.exit_code = 1;
        out.error = e.what();
        summary << "error = " << e.what() << "\n";
    }
    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    summary << "wall_seconds = " << io::format_double(out.wall_seconds) << "\n";
    summary << "status = " << (out.exit_code == 0 ? "ok" : "failed") << "\n";
    io::write_text_file(out.run_dir + "/summary.txt", summary.str());
    return out;
}

// ---------------------------------------------------------------------------
// Sweeps

namespace {

std::string canonical_sweep_parameter(const std::string& p) {
    if (p == "beta0" || p == "β0") return "beta0";
    if (p == "beta1" || p == "β1") return "beta1";
    if (p == "init-scheme" || p == "init_scheme") return "init_scheme";
    if (p == "batch-size" || p == "batch_size") return "batch_size";
    throw Error("sweep: unsupported parameter '" + p +
                "' (valid: beta0, beta1, init-scheme, batch-size)");
}

}  // namespace

SweepSpec load_sweep(const std::string& path) {
    auto kvs = parse_kv(io::read_text_file(path), path);
    SweepSpec spec;
    std::string config_path;
    for (const auto& [k, v] : kvs) {
        if (k == "config") config_path = v;
        else if (k == "parameter") spec.parameter = canonical_sweep_parameter(v);
        else if (k == "values") { for (auto& s : split_list(v)) spec.values.push_back(s); }
        else if (k == "parameter2") spec.parameter2 = canonical_sweep_parameter(v);
        else if (k == "values2") { for (auto& s : split_list(v)) spec.values2.push_back(s); }
        else if (k == "repeats") spec.repeats = static_cast<int>(to_long(v));
        else throw Error(path + ": unknown sweep key '" + k + "'");
    }
    if (config_path.empty()) throw Error(path + ": missing 'config'");
    if (spec.parameter.empty()) throw Error(path + ": missing 'parameter'");
    if (spec.values.empty()) throw Error(path + ": empty 'values'");
    if (!spec.parameter2.empty() && spec.values2.empty())
        throw Error(path + ": 'parameter2' given without 'values2'");
    if (spec.repeats < 1) throw Error(path + ": repeats must be >= 1");

    fs::path base = fs::path(path).parent_path() / config_path;
    spec.base = load_config(fs::exists(base) ? base.string() : config_path);
    return spec;
}

SweepResult run_sweep(const SweepSpec& spec, const std::string& out_root) {
    SweepResult result;
    const std::string dir = io::create_run_directory(out_root, "sweep");
    std::vector<std::string> axis2 = spec.values2.empty() ? std::vector<std::string>{""}
                                                          : spec.values2;
    for (const std::string& v1 : spec.values) {
        for (const std::string& v2 : axis2) {
            for (int rep = 0; rep < spec.repeats; ++rep) {
                SweepCell cell;
                cell.value1 = v1;
                cell.value2 = v2;
                cell.repeat = rep;
                cell.seed = spec.base.seed + static_cast<std::uint64_t>(rep);
                try {
                    ExperimentConfig cfg = spec.base;
                    find_key(spec.parameter)->set(cfg, v1);
                    if (!spec.parameter2.empty()) find_key(spec.parameter2)->set(cfg, v2);
                    cfg.seed = cell.seed;
                    cfg.n_posterior_samples = std::min<std::size_t>(cfg.n_posterior_samples, 500);
                    models::ForwardModel model = build_model(cfg);
                    engine::NoFasResult run = engine::nofas_run(model, to_engine_config(cfg, model),
                                                                to_flow_spec(cfg, model));
                    if (run.record.failed()) {
                        cell.status = run.record.error;
                    } else {
                        cell.status = "ok";
                        cell.final_loss = run.record.loss_trace.back();
                        cell.convergence_iteration =
                            run.record.convergence_iteration.value_or(-1);
                        const long t_f = static_cast<long>(run.record.loss_trace.size());
                        const long tail_start = t_f > 20000 ? 20000 : (t_f * 4) / 5;
                        double m = 0.0, s = 0.0;
                        const long n = t_f - tail_start;
                        for (long i = tail_start; i < t_f; ++i)
                            m += run.record.loss_trace[static_cast<std::size_t>(i)];
                        m /= static_cast<double>(n);
                        for (long i = tail_start; i < t_f; ++i) {
                            const double d =
                                run.record.loss_trace[static_cast<std::size_t>(i)] - m;
                            s += d * d;
                        }
                        cell.tail_std = std::sqrt(s / static_cast<double>(n));
                    }
                } catch (const std::exception& e) {
                    cell.status = e.what();
                }
                result.cells.push_back(std::move(cell));
            }
        }
    }

    std::ostringstream os;
    os << "parameter,value,parameter2,value2,repeat,seed,final_loss,convergence_iteration,"
          "tail_std,status\n";
    for (const auto& c : result.cells) {
        std::string status = c.status;
        std::replace(status.begin(), status.end(), ',', ';');
        os << spec.parameter << ',' << c.value1 << ',' << spec.parameter2 << ',' << c.value2
           << ',' << c.repeat << ',' << c.seed << ',' << io::format_double(c.final_loss) << ','
           << c.convergence_iteration << ',' << io::format_double(c.tail_std) << ',' << status
           << "\n";
    }
    result.csv = os.str();
    io::write_text_file(dir + "/sweep.csv", result.csv);
    return result;
}

}  // namespace nofas::experiment
