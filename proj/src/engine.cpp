#include "nofas/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nofas/optim.hpp"

namespace nofas::engine {

LikelihoodSpec make_likelihood(const models::ForwardModel& model, std::size_t n_obs,
                               std::uint64_t seed) {
    LikelihoodSpec spec;
    spec.observations = models::make_observations(model, n_obs, seed);
    spec.sigma = model.obs_sigma;
    for (double s : spec.sigma)
        if (s <= 0.0) throw Error("likelihood: sigma entries must be positive");
    return spec;
}

namespace {

struct SufficientStats {
    double constant;            // -(n*m/2)log(2pi) - n*sum(log sigma)
    std::vector<double> a;      // n / sigma^2
    std::vector<double> b;      // -2 * sum_i x_ij / sigma^2
    std::vector<double> c_sum;  // sum over j of sum_i x_ij^2 / sigma^2
};

SufficientStats suff_stats(const LikelihoodSpec& spec) {
    const std::size_t n = spec.n(), m = spec.m();
    if (n < 1) throw Error("likelihood: need at least one observation");
    SufficientStats st;
    st.a.resize(m);
    st.b.resize(m);
    st.c_sum.resize(1, 0.0);
    double log_sigma = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        if (spec.sigma[j] <= 0.0) throw Error("likelihood: sigma entries must be positive");
        const double s2 = spec.sigma[j] * spec.sigma[j];
        double s1 = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s1 += spec.observations[i][j];
            sq += spec.observations[i][j] * spec.observations[i][j];
        }
        st.a[j] = static_cast<double>(n) / s2;
        st.b[j] = -2.0 * s1 / s2;
        st.c_sum[0] += sq / s2;
        log_sigma += std::log(spec.sigma[j]);
    }
    st.constant = -0.5 * static_cast<double>(n * m) * std::log(2.0 * std::numbers::pi) -
                  static_cast<double>(n) * log_sigma;
    return st;
}

}  // namespace

Tensor log_likelihood(const Tensor& z, const TracedMap& f, const LikelihoodSpec& spec) {
    const SufficientStats st = suff_stats(spec);
    Tensor outputs = f(z);  // [B, m]
    const std::size_t m = spec.m();
    if (outputs.shape()[1] != m)
        throw Error("likelihood: model output dim " + std::to_string(outputs.shape()[1]) +
                    " does not match observations with m = " + std::to_string(m));

    Tensor a_row({1, m}, st.a);
    Tensor b_row({1, m}, st.b);
    // sum_i ((f_j - x_ij)/sigma_j)^2 = a_j f_j^2 + b_j f_j + const_j
    Tensor quad = ad::mul(ad::square(outputs), ad::broadcast(a_row, outputs.shape()));
    Tensor lin = ad::mul(outputs, ad::broadcast(b_row, outputs.shape()));
    Tensor per_sample = ad::sum(ad::add(quad, lin), 1);  // [B]
    per_sample = ad::add(per_sample, st.c_sum[0]);
    return ad::add(ad::mul(per_sample, -0.5), st.constant);
}

double log_likelihood_point(std::span<const double> outputs, const LikelihoodSpec& spec) {
    const std::size_t n = spec.n(), m = spec.m();
    double acc = 0.0, log_sigma = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double s = spec.sigma[j];
        if (s <= 0.0) throw Error("likelihood: sigma entries must be positive");
        log_sigma += std::log(s);
        for (std::size_t i = 0; i < n; ++i) {
            const double r = (outputs[j] - spec.observations[i][j]) / s;
            acc += r * r;
        }
    }
    return -0.5 * acc -
           0.5 * static_cast<double>(n * m) * std::log(2.0 * std::numbers::pi) -
           static_cast<double>(n) * log_sigma;
}

PriorSpec prior_of(const models::ForwardModel& model) {
    PriorSpec p;
    p.kind = model.prior;
    p.box = model.prior_box;
    return p;
}

Tensor log_prior(const Tensor& z, const PriorSpec& prior) {
    const std::size_t batch = z.shape()[0];
    if (prior.kind == models::PriorKind::improper_uniform)
        return Tensor::zeros({batch});
    const std::size_t d = z.shape()[1];
    if (prior.box.size() != d) throw Error("prior: box dimension mismatch");

    std::vector<double> lo(d), hi(d);
    for (std::size_t i = 0; i < d; ++i) {
        lo[i] = prior.box[i].first;
        hi[i] = prior.box[i].second;
    }
    Tensor lo_row({1, d}, lo), hi_row({1, d}, hi);
    Tensor zero = Tensor::zeros(z.shape());
    Tensor over = ad::elementwise_max(ad::sub(z, ad::broadcast(hi_row, z.shape())), zero);
    Tensor under = ad::elementwise_max(ad::sub(ad::broadcast(lo_row, z.shape()), z), zero);
    Tensor dist2 = ad::sum(ad::square(ad::add(over, under)), 1);
    return ad::mul(dist2, -prior.penalty);
}

double log_prior_point(std::span<const double> z, const PriorSpec& prior) {
    if (prior.kind == models::PriorKind::improper_uniform) return 0.0;
    double dist2 = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const auto [lo, hi] = prior.box[i];
        const double over = std::max(z[i] - hi, 0.0) + std::max(lo - z[i], 0.0);
        dist2 += over * over;
    }
    return -prior.penalty * dist2;
}

FreeEnergy free_energy(const flows::FlowStack& stack, const LikelihoodSpec& spec,
                       const TracedMap& f, const PriorSpec& prior, std::size_t batch, Rng& rng,
                       bool train) {
    if (batch < 1) throw Error("free_energy: batch must be >= 1");
    flows::FlowSample sample = flows::flow_sample(stack, batch, rng, train);

    if (prior.kind == models::PriorKind::box_uniform) {
        std::size_t inside = 0;
        auto zv = sample.z_k.data();
        const std::size_t d = stack.dim;
        for (std::size_t r = 0; r < batch; ++r) {
            bool ok = true;
            for (std::size_t i = 0; i < d; ++i) {
                const auto [lo, hi] = prior.box[i];
                if (zv[r * d + i] < lo || zv[r * d + i] > hi) { ok = false; break; }
            }
            if (ok) ++inside;
        }
        if (inside == 0)
            throw Error("free_energy: every flow sample fell outside the prior box; "
                        "the flow and prior are inconsistent");
    }

    Tensor ll = log_likelihood(sample.z_k, f, spec);
    Tensor lp = log_prior(sample.z_k, prior);
    Tensor loss = ad::sub(ad::mean(sample.log_q), ad::mean(ad::add(ll, lp)));
    return FreeEnergy{loss, std::move(sample)};
}

std::optional<long> convergence_detector(const std::vector<double>& trace, std::size_t window,
                                         double threshold) {
    if (window < 2) throw Error("convergence_detector: window must be >= 2");
    if (trace.size() < 2 * window) return std::nullopt;
    std::vector<double> prefix(trace.size() + 1, 0.0);
    for (std::size_t i = 0; i < trace.size(); ++i) prefix[i + 1] = prefix[i] + trace[i];
    auto ma = [&](std::size_t end) {  // mean of trace[end-window .. end-1]
        return (prefix[end] - prefix[end - window]) / static_cast<double>(window);
    };
    for (std::size_t t = 2 * window; t <= trace.size(); ++t) {
        const double cur = ma(t);
        const double prev = ma(t - window);
        const double rel = std::abs(cur - prev) / std::max(std::abs(prev), 1e-300);
        if (rel < threshold) return static_cast<long>(t);
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Algorithm: alternating updates

namespace {

std::vector<std::vector<double>> rows_of(const Tensor& t) {
    const std::size_t r = t.shape()[0], c = t.shape()[1];
    std::vector<std::vector<double>> out(r, std::vector<double>(c));
    auto v = t.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i][j] = v[i * c + j];
    return out;
}

}  // namespace

NoFasResult nofas_run(const models::ForwardModel& model, const NoFasConfig& config,
                      const flows::FlowSpec& flow_spec) {
    if (config.batch_size < config.calib_size || config.calib_size < 1)
        throw Error("nofas: need batch size >= calibration size >= 1");
    if (config.calib_interval < 1) throw Error("nofas: calibration interval must be >= 1");
    if (flow_spec.dim != model.latent_dim)
        throw Error("nofas: flow dimension does not match the model");

    const std::vector<std::size_t>& counts =
        config.pregrid_counts.empty() ? model.pregrid_counts_adaptive : config.pregrid_counts;
    auto pregrid = surrogate::make_pregrid(model.pregrid_bounds, counts);
    if (config.budget < static_cast<long>(pregrid.size()))
        throw Error("nofas: budget " + std::to_string(config.budget) +
                    " cannot cover the pre-grid of " + std::to_string(pregrid.size()));

    NoFasResult result{RunRecord{},
                       surrogate::SurrogateState{
                           surrogate::SurrogateNet(model.latent_dim, model.output_dim,
                                                   config.seed + 11),
                           surrogate::CalibrationMemory(config.memory_size)},
                       LikelihoodSpec{}};
    RunRecord& rec = result.record;
    surrogate::SurrogateNet& net = result.state.net;
    surrogate::CalibrationMemory& memory = result.state.memory;

    // Pre-grid solutions through the true model
    std::vector<std::vector<double>> pregrid_outputs;
    pregrid_outputs.reserve(pregrid.size());
    for (const auto& p : pregrid) pregrid_outputs.push_back(model.evaluate_latent(p));
    long budget_used = static_cast<long>(pregrid.size());
    memory.set_pregrid(pregrid, pregrid_outputs);
    net.fit_standardization(pregrid_outputs);
    net.fit_input_standardization(pregrid);

    surrogate::SurrogateTrainConfig init_cfg = config.surrogate_opt;
    init_cfg.iterations = config.surrogate_init_iters;
    surrogate::initial_fit(net, memory, init_cfg);

    result.likelihood = make_likelihood(model, config.n_observations, config.seed + 2);
    const PriorSpec prior = prior_of(model);
    TracedMap surrogate_map = [&net](const Tensor& z) { return net.forward(z); };

    flows::FlowStack stack = flows::init_flow(flow_spec, config.seed + 1);
    ad::RmspropOptimizer flow_opt(stack.parameters(), config.flow_lr, config.flow_lr_decay);

    Rng loop_rng = make_rng(config.seed + 3);
    Rng acquire_rng = make_rng(config.seed + 4);
    const surrogate::LossWeights weights{config.beta0, config.beta1};
    long calib_index = 0;
    bool budget_warning = false;

    for (long t = 1; t <= config.flow_iters; ++t) {
        const ad::Tensor z0({config.batch_size, stack.dim},
                            normal_vector(loop_rng, config.batch_size * stack.dim));

        if (config.calibrate && t % config.calib_interval == 0) {
            if (budget_used + static_cast<long>(config.calib_size) <= config.budget) {
                // Untraced pass: no graph is active here.
                auto [zk, logdet] = stack.transform(z0, true);
                (void)logdet;
                auto acq = surrogate::acquire_batch(rows_of(zk), config.calib_size,
                                                    config.noise_eps, acquire_rng);
                surrogate::CalibrationBatch batch;
                batch.index = ++calib_index;
                batch.points = std::move(acq.points);
                for (const auto& p : batch.points)
                    batch.outputs.push_back(model.evaluate_latent(p));
                budget_used += static_cast<long>(batch.points.size());
                memory.push(std::move(batch));
                surrogate::update_surrogate(net, memory, weights, calib_index,
                                            config.surrogate_opt);
            } else if (!budget_warning) {
                budget_warning = true;
                rec.warnings.push_back("budget exhausted at iteration " + std::to_string(t) +
                                       "; continuing without further calibration");
            }
        }

        double loss_value = 0.0;
        try {
            ad::Graph graph;
            auto [zk, logdet] = stack.transform(z0, true);
            Tensor log_q = ad::sub(flows::standard_normal_log_density(z0), logdet);
            Tensor ll = log_likelihood(zk, surrogate_map, result.likelihood);
            Tensor lp = log_prior(zk, prior);
            Tensor loss = ad::sub(ad::mean(log_q), ad::mean(ad::add(ll, lp)));
            loss_value = loss.value();
            if (!std::isfinite(loss_value)) {
                rec.error = "non-finite flow loss at iteration " + std::to_string(t);
                break;
            }
            auto grads = graph.backward(loss);
            rec.lr_trace.push_back(flow_opt.current_lr());
            flow_opt.step(grads);
        } catch (const Error& e) {
            rec.error = std::string(e.what()) + " (iteration " + std::to_string(t) + ")";
            break;
        }
        rec.loss_trace.push_back(loss_value);
        rec.budget_trace.push_back(budget_used);

        if (!rec.convergence_iteration) {
            rec.convergence_iteration = convergence_detector(
                rec.loss_trace, config.convergence_window, config.convergence_threshold);
            if (rec.convergence_iteration && config.stop_on_convergence) break;
        }
    }

    rec.total_true_evals = budget_used;
    rec.calibration_count = calib_index;

    if (!rec.failed()) {
        // Final draws use batch statistics over the whole sampling batch, the
        // same map the optimizer saw; running averages can lag a run that
        // stops while the flow is still moving.
        Rng sample_rng = make_rng(config.seed + 5);
        flows::FlowSample post =
            flows::flow_sample(stack, config.n_posterior_samples, sample_rng, true);
        rec.posterior_latent = rows_of(post.z_k);
        rec.posterior_physical.reserve(rec.posterior_latent.size());
        for (const auto& u : rec.posterior_latent) {
            std::vector<double> clamped = u;
            for (double& v : clamped) v = std::clamp(v, -5.0, 5.0);
            rec.posterior_physical.push_back(model.latent_to_physical(clamped));
        }
        PredictiveSamples pred =
            posterior_predictive(rec.posterior_latent, model, config.seed + 7);
        rec.predictive = std::move(pred.noised);
        rec.predictive_raw = std::move(pred.raw);
        rec.predictive_skipped = pred.skipped;
        rec.validation_evals = static_cast<long>(rec.predictive_raw.size());
    }
    return result;
}

PredictiveSamples posterior_predictive(const std::vector<std::vector<double>>& latent_samples,
                                       const models::ForwardModel& model, std::uint64_t seed) {
    PredictiveSamples out;
    Rng rng = make_rng(seed);
    for (const auto& u : latent_samples) {
        std::vector<double> x;
        try {
            x = model.evaluate_latent(u);
        } catch (const Error&) {
            ++out.skipped;
            continue;
        }
        std::vector<double> noised(x.size());
        for (std::size_t j = 0; j < x.size(); ++j)
            noised[j] = x[j] + model.obs_sigma[j] * normal_draw(rng);
        out.raw.push_back(std::move(x));
        out.noised.push_back(std::move(noised));
    }
    return out;
}

}  // namespace nofas::engine
