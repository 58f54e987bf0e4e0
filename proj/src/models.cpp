#include "nofas/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace nofas::models {

namespace detail {
const std::vector<std::pair<double, double>>& default_waveform_table();
}

// ---------------------------------------------------------------------------
// Waveform

Waveform::Waveform(std::vector<double> times, std::vector<double> flows)
    : times_(std::move(times)), flows_(std::move(flows)) {
    if (times_.size() != flows_.size() || times_.size() < 3)
        throw Error("waveform: need matching time/flow columns with at least 3 samples");
    for (std::size_t i = 1; i < times_.size(); ++i)
        if (times_[i] <= times_[i - 1])
            throw Error("waveform: time points must be strictly increasing");
    if (std::abs(flows_.front() - flows_.back()) > 1e-9 * (1.0 + std::abs(flows_.front())))
        throw Error("waveform: first and last flow samples must match for a periodic cycle");
}

double Waveform::flow(double t) const {
    const double T = period();
    double u = std::fmod(t - times_.front(), T);
    if (u < 0.0) u += T;
    u += times_.front();
    auto it = std::upper_bound(times_.begin(), times_.end(), u);
    std::size_t hi = static_cast<std::size_t>(it - times_.begin());
    if (hi == 0) hi = 1;
    if (hi >= times_.size()) hi = times_.size() - 1;
    const std::size_t lo = hi - 1;
    const double w = (u - times_[lo]) / (times_[hi] - times_[lo]);
    return flows_[lo] + w * (flows_[hi] - flows_[lo]);
}

double Waveform::mean_flow() const {
    double area = 0.0;
    for (std::size_t i = 1; i < times_.size(); ++i)
        area += 0.5 * (flows_[i] + flows_[i - 1]) * (times_[i] - times_[i - 1]);
    return area / period();
}

const Waveform& Waveform::default_inflow() {
    static const Waveform wave = [] {
        const auto& table = detail::default_waveform_table();
        std::vector<double> t, q;
        t.reserve(table.size());
        q.reserve(table.size());
        for (const auto& [ti, qi] : table) {
            t.push_back(ti);
            q.push_back(qi);
        }
        return Waveform(std::move(t), std::move(q));
    }();
    return wave;
}

Waveform Waveform::from_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("waveform: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error("waveform: empty file " + path);
    // normalize the header
    std::string header = line;
    header.erase(std::remove_if(header.begin(), header.end(),
                                [](char c) { return c == ' ' || c == '\r'; }),
                 header.end());
    if (header != "time_s,flow_ml_s")
        throw Error("waveform: expected header 'time_s,flow_ml_s' in " + path);
    std::vector<double> t, q;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::istringstream ss(line);
        std::string a, b;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b))
            throw Error("waveform: malformed row at line " + std::to_string(lineno));
        t.push_back(std::stod(a));
        q.push_back(std::stod(b));
    }
    return Waveform(std::move(t), std::move(q));
}

// ---------------------------------------------------------------------------
// RK4

OdeTrajectory rk4_integrate(const OdeRhs& rhs, std::vector<double> y0, double t0, double t1,
                            double dt) {
    if (dt <= 0.0) throw Error("rk4: dt must be positive");
    if (t1 <= t0) throw Error("rk4: t1 must exceed t0");
    const std::size_t n = y0.size();
    OdeTrajectory traj;
    traj.times.push_back(t0);
    traj.states.push_back(y0);

    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
    double t = t0;
    std::vector<double> y = std::move(y0);
    while (t < t1 - 1e-12 * std::max(1.0, std::abs(t1))) {
        const double h = std::min(dt, t1 - t);
        rhs(t, y, k1);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        rhs(t + 0.5 * h, tmp, k2);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
        rhs(t + 0.5 * h, tmp, k3);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
        rhs(t + h, tmp, k4);
        for (std::size_t i = 0; i < n; ++i)
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        t += h;
        for (double v : y)
            if (!std::isfinite(v))
                throw Error("rk4: non-finite state at t = " + std::to_string(t));
        traj.times.push_back(t);
        traj.states.push_back(y);
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Closed-form model

std::array<double, 2> closed_form_eval(const std::array<double, 2>& z) {
    const double cubic = z[0] * z[0] * z[0] / 10.0;
    const double e = std::exp(z[1] / 3.0);
    return {cubic + e, cubic - e};
}

// ---------------------------------------------------------------------------
// Windkessel models

namespace {

struct CycleStats {
    double min, max, mean;
};

/// Summarizes P_p over one cycle of the periodic steady state. The circuit
/// state obeys a linear ODE, so the one-cycle map state(0) -> state(T) is
/// affine; two probe integrations determine it and the fixed point is the
/// periodic solution, independent of the time constant R*C.
PressureSummary solve_circuit(const std::function<double(double t, double state)>& dstate,
                              const std::function<double(double t, double state)>& proximal,
                              double state0, const Waveform& wave,
                              const CircuitSolveOptions& opts) {
    const double T = wave.period();
    const double dt = T / opts.steps_per_cycle;
    OdeRhs rhs = [&](double t, std::span<const double> y, std::span<double> dy) {
        dy[0] = dstate(t, y[0]);
    };

    auto cycle_end = [&](double s) {
        return rk4_integrate(rhs, {s}, 0.0, T, dt).states.back()[0];
    };
    const double probe = std::max(1.0, std::abs(state0));
    const double f0 = cycle_end(state0);
    const double f1 = cycle_end(state0 + probe);
    const double a = (f1 - f0) / probe;
    if (!(a < 1.0))
        throw Error("circuit: the one-cycle map does not contract; no periodic steady state");
    const double fixed_point = (f0 - a * state0) / (1.0 - a);

    OdeTrajectory traj = rk4_integrate(rhs, {fixed_point}, 0.0, T, dt);
    const double residual = std::abs(traj.states.back()[0] - fixed_point) / kBaryePerMmHg;
    if (residual > opts.cycle_tol_mmHg)
        throw Error("circuit: cycle-to-cycle pressure change " + std::to_string(residual) +
                    " mmHg exceeds " + std::to_string(opts.cycle_tol_mmHg));

    double pmin = 1e300, pmax = -1e300, area = 0.0;
    std::vector<double> pp(traj.times.size());
    for (std::size_t i = 0; i < traj.times.size(); ++i)
        pp[i] = proximal(traj.times[i], traj.states[i][0]);
    for (double v : pp) {
        pmin = std::min(pmin, v);
        pmax = std::max(pmax, v);
    }
    for (std::size_t i = 1; i < pp.size(); ++i)
        area += 0.5 * (pp[i] + pp[i - 1]) * (traj.times[i] - traj.times[i - 1]);
    PressureSummary out;
    out.min_mmHg = pmin / kBaryePerMmHg;
    out.max_mmHg = pmax / kBaryePerMmHg;
    out.mean_mmHg = area / T / kBaryePerMmHg;
    return out;
}

void check_range(const char* name, double v, double lo, double hi) {
    const double slack = 1e-9 * (std::abs(lo) + std::abs(hi));
    if (v < lo - slack || v > hi + slack)
        throw Error(std::string("circuit: ") + name + " = " + std::to_string(v) +
                    " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

}  // namespace

PressureSummary rc_eval(double R, double C, const Waveform& wave,
                        const CircuitSolveOptions& opts) {
    check_range("R", R, 100.0, 1500.0);
    check_range("C", C, 1e-5, 1e-2);
    const double pd = kDistalPressureMmHg * kBaryePerMmHg;
    auto dstate = [&, R, C](double t, double pp) {
        const double qd = (pp - pd) / R;
        return (wave.flow(t) - qd) / C;
    };
    auto proximal = [](double, double pp) { return pp; };
    const double p0 = pd + R * wave.mean_flow();
    return solve_circuit(dstate, proximal, p0, wave, opts);
}

PressureSummary rcr_eval(double Rp, double Rd, double C, const Waveform& wave,
                         const CircuitSolveOptions& opts) {
    check_range("Rp", Rp, 100.0, 1500.0);
    check_range("Rd", Rd, 100.0, 1500.0);
    check_range("C", C, 1e-5, 1e-2);
    const double pd = kDistalPressureMmHg * kBaryePerMmHg;
    auto dstate = [&, Rd, C](double t, double pc) {
        const double qd = (pc - pd) / Rd;
        return (wave.flow(t) - qd) / C;
    };
    auto proximal = [&, Rp](double t, double pc) { return pc + Rp * wave.flow(t); };
    const double pc0 = pd + Rd * wave.mean_flow();
    return solve_circuit(dstate, proximal, pc0, wave, opts);
}

// ---------------------------------------------------------------------------
// Sobol function

const std::array<double, 5>& sobol_a() {
    static const std::array<double, 5> a = {0.084, 0.229, 0.913, 0.152, 0.826};
    return a;
}

const std::array<double, 20>& sobol_matrix() {
    static const std::array<double, 20> m = [] {
        std::array<double, 20> out{};
        const double s = 1.0 / std::sqrt(2.0);
        const int ones[4][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 4}};
        for (int r = 0; r < 4; ++r)
            for (int c : ones[r]) out[static_cast<std::size_t>(r * 5 + c)] = s;
        return out;
    }();
    return m;
}

namespace {

std::array<double, 5> sobol_c() {
    std::array<double, 5> c{};
    const auto& a = sobol_a();
    for (std::size_t i = 0; i < 5; ++i) c[i] = 2.0 * std::abs(2.0 * a[i] - 1.0);
    return c;
}

std::array<double, 5> sobol_g(const std::array<double, 5>& z) {
    const auto c = sobol_c();
    std::array<double, 5> g{};
    for (std::size_t i = 0; i < 5; ++i) {
        const double r = std::exp(z[i]);
        g[i] = (c[i] + r) / (1.0 + r);
    }
    return g;
}

}  // namespace

std::array<double, 4> sobol_eval(const std::array<double, 5>& z) {
    const auto g = sobol_g(z);
    const auto& A = sobol_matrix();
    std::array<double, 4> out{};
    for (std::size_t r = 0; r < 4; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < 5; ++c) acc += A[r * 5 + c] * g[c];
        out[r] = acc;
    }
    return out;
}

std::array<double, 5> sobol_ridge(double t) {
    static const std::array<double, 5> z_star = {2.75, -1.5, 0.25, -2.5, 1.75};
    static const std::array<double, 5> v = {1.0, -1.0, 1.0, -1.0, 1.0};
    const auto c = sobol_c();
    const auto g0 = sobol_g(z_star);
    std::array<double, 5> out{};
    for (std::size_t i = 0; i < 5; ++i) {
        const double y = g0[i] + v[i] * t;
        if (!(y > 1.0 && y < c[i]))
            throw Error("sobol_ridge: t = " + std::to_string(t) +
                        " leaves the admissible range of coordinate " + std::to_string(i + 1));
        // inverse of g: r = (c - y) / (y - 1)
        out[i] = std::log((c[i] - y) / (y - 1.0));
    }
    return out;
}

std::pair<double, double> sobol_ridge_interval() {
    static const std::array<double, 5> z_star = {2.75, -1.5, 0.25, -2.5, 1.75};
    static const std::array<double, 5> v = {1.0, -1.0, 1.0, -1.0, 1.0};
    const auto c = sobol_c();
    const auto g0 = sobol_g(z_star);
    double lo = -1e300, hi = 1e300;
    for (std::size_t i = 0; i < 5; ++i) {
        // require 1 < g0 + v t < c
        if (v[i] > 0.0) {
            lo = std::max(lo, 1.0 - g0[i]);
            hi = std::min(hi, c[i] - g0[i]);
        } else {
            lo = std::max(lo, g0[i] - c[i]);
            hi = std::min(hi, g0[i] - 1.0);
        }
    }
    return {lo, hi};
}

// ---------------------------------------------------------------------------
// ForwardModel plumbing

std::vector<double> ForwardModel::latent_to_physical(std::span<const double> u) const {
    if (physical_bounds.empty()) return std::vector<double>(u.begin(), u.end());
    std::vector<double> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        double v = u[i];
        if (std::abs(v) > 5.0)
            throw Error("latent_transform: coordinate " + std::to_string(i + 1) + " = " +
                        std::to_string(v) + " is far outside [-3, 3]; the flow has diverged");
        v = std::clamp(v, -3.0, 3.0);
        const auto [lo, hi] = physical_bounds[i];
        out[i] = lo + (v + 3.0) / 6.0 * (hi - lo);
    }
    return out;
}

std::vector<double> ForwardModel::physical_to_latent(std::span<const double> p) const {
    if (physical_bounds.empty()) return std::vector<double>(p.begin(), p.end());
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto [lo, hi] = physical_bounds[i];
        out[i] = -3.0 + 6.0 * (p[i] - lo) / (hi - lo);
    }
    return out;
}

std::vector<double> ForwardModel::evaluate_latent(std::span<const double> u) const {
    return eval_physical(latent_to_physical(u));
}

namespace {

void finish_model(ForwardModel& m) {
    m.true_output = m.eval_physical(m.true_physical);
    m.obs_sigma.resize(m.output_dim);
    for (std::size_t j = 0; j < m.output_dim; ++j)
        m.obs_sigma[j] = m.noise_scale * std::abs(m.true_output[j]);
}

}  // namespace

ForwardModel make_closed_form_model() {
    ForwardModel m;
    m.name = "closed_form";
    m.latent_dim = 2;
    m.output_dim = 2;
    m.param_names = {"z1", "z2"};
    m.true_latent = {3.0, 5.0};
    m.true_physical = m.true_latent;
    m.noise_scale = 0.05;
    m.pregrid_bounds = {{-6.0, 6.0}, {-6.0, 6.0}};
    m.pregrid_counts_adaptive = {4, 4};
    m.pregrid_counts_fixed = {8, 8};
    // The pre-grid is drawn from the prior, so the uniform prior's support is
    // the pre-grid box.
    m.prior = PriorKind::box_uniform;
    m.prior_box = m.pregrid_bounds;
    m.eval_physical = [](std::span<const double> z) {
        auto out = closed_form_eval({z[0], z[1]});
        return std::vector<double>(out.begin(), out.end());
    };
    m.traced_eval_latent = [](const ad::Tensor& z) {
        ad::Tensor z1 = ad::slice(z, 1, 0, 1);
        ad::Tensor z2 = ad::slice(z, 1, 1, 1);
        ad::Tensor cubic = ad::mul(ad::mul(ad::mul(z1, z1), z1), 0.1);
        ad::Tensor e = ad::exp(ad::mul(z2, 1.0 / 3.0));
        return ad::concat(ad::add(cubic, e), ad::sub(cubic, e), 1);
    };
    finish_model(m);
    return m;
}

ForwardModel make_rc_model(const Waveform& wave) {
    ForwardModel m;
    m.name = "rc";
    m.latent_dim = 2;
    m.output_dim = 3;
    m.param_names = {"R", "C"};
    m.physical_bounds = {{100.0, 1500.0}, {1e-5, 1e-2}};
    m.true_physical = {1000.0, 5e-5};
    m.true_latent = m.physical_to_latent(m.true_physical);
    m.noise_scale = 0.05;
    m.pregrid_bounds = {{-3.0, 3.0}, {-3.0, 3.0}};
    m.pregrid_counts_adaptive = {4, 4};
    m.pregrid_counts_fixed = {8, 8};
    m.prior = PriorKind::box_uniform;
    m.prior_box = {{-3.0, 3.0}, {-3.0, 3.0}};
    m.eval_physical = [wave](std::span<const double> p) {
        const PressureSummary s = rc_eval(p[0], p[1], wave);
        return std::vector<double>{s.min_mmHg, s.max_mmHg, s.mean_mmHg};
    };
    finish_model(m);
    return m;
}

ForwardModel make_rcr_model(const Waveform& wave) {
    ForwardModel m;
    m.name = "rcr";
    m.latent_dim = 3;
    m.output_dim = 3;
    m.param_names = {"Rp", "Rd", "C"};
    m.physical_bounds = {{100.0, 1500.0}, {100.0, 1500.0}, {1e-5, 1e-2}};
    m.true_physical = {1000.0, 1000.0, 5e-5};
    m.true_latent = m.physical_to_latent(m.true_physical);
    m.noise_scale = 0.05;
    m.pregrid_bounds = {{-3.0, 3.0}, {-3.0, 3.0}, {-3.0, 3.0}};
    m.pregrid_counts_adaptive = {4, 4, 4};
    m.pregrid_counts_fixed = {6, 6, 6};
    m.prior = PriorKind::box_uniform;
    m.prior_box = {{-3.0, 3.0}, {-3.0, 3.0}, {-3.0, 3.0}};
    m.eval_physical = [wave](std::span<const double> p) {
        const PressureSummary s = rcr_eval(p[0], p[1], p[2], wave);
        return std::vector<double>{s.min_mmHg, s.max_mmHg, s.mean_mmHg};
    };
    finish_model(m);
    return m;
}

ForwardModel make_sobol_model() {
    ForwardModel m;
    m.name = "sobol";
    m.latent_dim = 5;
    m.output_dim = 4;
    m.param_names = {"z1", "z2", "z3", "z4", "z5"};
    m.true_latent = {2.75, -1.5, 0.25, -2.5, 1.75};
    m.true_physical = m.true_latent;
    m.noise_scale = 0.01;
    m.pregrid_bounds.assign(5, {-4.0, 4.0});
    m.pregrid_counts_adaptive.assign(5, 3);
    m.pregrid_counts_fixed.assign(5, 4);
    m.prior = PriorKind::box_uniform;
    m.prior_box.assign(5, {-4.0, 4.0});
    m.eval_physical = [](std::span<const double> z) {
        std::array<double, 5> in{};
        std::copy(z.begin(), z.end(), in.begin());
        auto out = sobol_eval(in);
        return std::vector<double>(out.begin(), out.end());
    };
    m.traced_eval_latent = [](const ad::Tensor& z) {
        const auto c = sobol_c();
        const std::size_t b = z.shape()[0];
        ad::Tensor r = ad::exp(z);
        ad::Tensor c_row({1, 5}, std::vector<double>(c.begin(), c.end()));
        ad::Tensor num = ad::add(ad::broadcast(c_row, {b, 5}), r);
        ad::Tensor den = ad::add(r, 1.0);
        ad::Tensor g = ad::div(num, den);
        const auto& A = sobol_matrix();
        std::vector<double> at(20);  // A^T, 5x4
        for (std::size_t rr = 0; rr < 4; ++rr)
            for (std::size_t cc = 0; cc < 5; ++cc) at[cc * 4 + rr] = A[rr * 5 + cc];
        return ad::matmul(g, ad::Tensor({5, 4}, std::move(at)));
    };
    finish_model(m);
    return m;
}

ForwardModel make_model(const std::string& name) {
    if (name == "closed_form") return make_closed_form_model();
    if (name == "rc") return make_rc_model();
    if (name == "rcr") return make_rcr_model();
    if (name == "sobol") return make_sobol_model();
    throw Error("unknown model '" + name + "' (valid: closed_form, rc, rcr, sobol)");
}

std::vector<std::vector<double>> make_observations(std::span<const double> x_star,
                                                   std::span<const double> sigma, std::size_t n,
                                                   std::uint64_t seed) {
    if (n < 1) throw Error("observations: need n >= 1");
    if (x_star.size() != sigma.size()) throw Error("observations: mean/sigma size mismatch");
    Rng rng = make_rng(seed);
    std::vector<std::vector<double>> rows(n);
    for (auto& row : rows) {
        row.resize(x_star.size());
        for (std::size_t j = 0; j < row.size(); ++j)
            row[j] = x_star[j] + sigma[j] * normal_draw(rng);
    }
    return rows;
}

std::vector<std::vector<double>> make_observations(const ForwardModel& model, std::size_t n,
                                                   std::uint64_t seed) {
    return make_observations(model.true_output, model.obs_sigma, n, seed);
}

}  // namespace nofas::models
