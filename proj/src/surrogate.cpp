#include "nofas/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nofas/optim.hpp"

namespace nofas::surrogate {

std::vector<std::vector<double>> make_pregrid(
    const std::vector<std::pair<double, double>>& bounds,
    const std::vector<std::size_t>& counts) {
    if (bounds.size() != counts.size())
        throw Error("pregrid: bounds and counts must have the same dimension");
    for (std::size_t c : counts)
        if (c < 2) throw Error("pregrid: need at least 2 points per dimension");

    const std::size_t d = bounds.size();
    std::size_t total = 1;
    for (std::size_t c : counts) total *= c;

    std::vector<std::vector<double>> grid;
    grid.reserve(total);
    std::vector<std::size_t> idx(d, 0);
    for (std::size_t p = 0; p < total; ++p) {
        std::vector<double> point(d);
        for (std::size_t i = 0; i < d; ++i) {
            const auto [lo, hi] = bounds[i];
            point[i] = lo + (hi - lo) * static_cast<double>(idx[i]) /
                                static_cast<double>(counts[i] - 1);
        }
        grid.push_back(std::move(point));
        for (std::size_t i = d; i-- > 0;) {
            if (++idx[i] < counts[i]) break;
            idx[i] = 0;
        }
    }
    return grid;
}

CalibrationMemory::CalibrationMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ < 1) throw Error("memory: capacity must be >= 1");
}

void CalibrationMemory::set_pregrid(std::vector<std::vector<double>> points,
                                    std::vector<std::vector<double>> outputs) {
    if (points.size() != outputs.size())
        throw Error("memory: pre-grid points/outputs size mismatch");
    pregrid_points_ = std::move(points);
    pregrid_outputs_ = std::move(outputs);
}

void CalibrationMemory::push(CalibrationBatch batch) {
    if (batch.points.size() != batch.outputs.size())
        throw Error("memory: batch points/outputs size mismatch");
    if (!batches_.empty() && batch.index <= batches_.back().index)
        throw Error("memory: batch indices must be increasing");
    batches_.push_back(std::move(batch));
    while (batches_.size() > capacity_) batches_.pop_front();
}

std::vector<double> memory_weights(long j, const CalibrationMemory& memory, double beta1) {
    const auto& batches = memory.batches();
    if (batches.empty()) throw Error("memory_weights: no stored batches");
    std::vector<double> w(batches.size());
    double norm = 0.0;
    for (std::size_t i = 0; i < batches.size(); ++i) {
        w[i] = std::exp(-beta1 * static_cast<double>(j - batches[i].index));
        norm += w[i];
    }
    for (double& v : w) v /= norm;
    return w;
}

SurrogateNet::SurrogateNet(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed,
                           std::vector<std::size_t> hidden)
    : input_dim_(input_dim), output_dim_(output_dim) {
    Rng rng = make_rng(seed);
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(output_dim);
    net_ = nn::make_mlp(dims, nn::Activation::tanh, nn::InitScheme::glorot_uniform, rng);
    out_mean_.assign(output_dim, 0.0);
    out_std_.assign(output_dim, 1.0);
    in_mean_.assign(input_dim, 0.0);
    in_std_.assign(input_dim, 1.0);
}

void SurrogateNet::fit_input_standardization(const std::vector<std::vector<double>>& points) {
    if (points.empty()) throw Error("surrogate: cannot standardize on empty inputs");
    const std::size_t n = points.size();
    in_mean_.assign(input_dim_, 0.0);
    in_std_.assign(input_dim_, 0.0);
    for (const auto& row : points)
        for (std::size_t j = 0; j < input_dim_; ++j) in_mean_[j] += row[j];
    for (double& v : in_mean_) v /= static_cast<double>(n);
    for (const auto& row : points)
        for (std::size_t j = 0; j < input_dim_; ++j) {
            const double d = row[j] - in_mean_[j];
            in_std_[j] += d * d;
        }
    for (double& v : in_std_) v = std::max(std::sqrt(v / static_cast<double>(n)), 1e-12);
}

void SurrogateNet::fit_standardization(const std::vector<std::vector<double>>& outputs) {
    if (outputs.empty()) throw Error("surrogate: cannot standardize on empty outputs");
    const std::size_t n = outputs.size();
    out_mean_.assign(output_dim_, 0.0);
    out_std_.assign(output_dim_, 0.0);
    for (const auto& row : outputs)
        for (std::size_t j = 0; j < output_dim_; ++j) out_mean_[j] += row[j];
    for (double& v : out_mean_) v /= static_cast<double>(n);
    for (const auto& row : outputs)
        for (std::size_t j = 0; j < output_dim_; ++j) {
            const double d = row[j] - out_mean_[j];
            out_std_[j] += d * d;
        }
    for (double& v : out_std_) v = std::max(std::sqrt(v / static_cast<double>(n)), 1e-12);
}

Tensor SurrogateNet::forward_standardized(const Tensor& z) const {
    Tensor mean_row({1, input_dim_}, in_mean_);
    std::vector<double> inv(input_dim_);
    for (std::size_t j = 0; j < input_dim_; ++j) inv[j] = 1.0 / in_std_[j];
    Tensor inv_row({1, input_dim_}, inv);
    Tensor zin = ad::mul(ad::sub(z, ad::broadcast(mean_row, z.shape())),
                         ad::broadcast(inv_row, z.shape()));
    return net_.forward(zin);
}

Tensor SurrogateNet::forward(const Tensor& z) const {
    Tensor y = forward_standardized(z);
    Tensor std_row({1, output_dim_}, out_std_);
    Tensor mean_row({1, output_dim_}, out_mean_);
    y = ad::mul(y, ad::broadcast(std_row, y.shape()));
    return ad::add(y, ad::broadcast(mean_row, y.shape()));
}

std::vector<double> SurrogateNet::predict(std::span<const double> z) const {
    Tensor in({1, input_dim_}, std::vector<double>(z.begin(), z.end()));
    Tensor out = forward(in);
    auto v = out.data();
    return std::vector<double>(v.begin(), v.end());
}

std::vector<double> SurrogateNet::standardize(std::span<const double> y) const {
    std::vector<double> out(output_dim_);
    for (std::size_t j = 0; j < output_dim_; ++j) out[j] = (y[j] - out_mean_[j]) / out_std_[j];
    return out;
}

namespace {

Tensor points_tensor(const std::vector<std::vector<double>>& pts) {
    const std::size_t n = pts.size();
    const std::size_t d = pts.front().size();
    std::vector<double> flat;
    flat.reserve(n * d);
    for (const auto& p : pts) flat.insert(flat.end(), p.begin(), p.end());
    return Tensor({n, d}, std::move(flat));
}

/// Mean over points of the squared L2 norm of the standardized residual.
Tensor batch_mse(const SurrogateNet& net, const std::vector<std::vector<double>>& pts,
                 const std::vector<std::vector<double>>& outs) {
    Tensor z = points_tensor(pts);
    Tensor pred = net.forward_standardized(z);
    std::vector<double> target_flat;
    target_flat.reserve(outs.size() * net.output_dim());
    for (const auto& y : outs) {
        auto s = net.standardize(y);
        target_flat.insert(target_flat.end(), s.begin(), s.end());
    }
    Tensor target({outs.size(), net.output_dim()}, std::move(target_flat));
    Tensor sq = ad::square(ad::sub(pred, target));
    return ad::mean(ad::sum(sq, 1));
}

}  // namespace

Tensor surrogate_loss(const SurrogateNet& net, const CalibrationMemory& memory,
                      const LossWeights& weights, long j) {
    if (memory.pregrid_points().empty())
        throw Error("surrogate_loss: memory holds no pre-grid");
    Tensor loss = ad::mul(batch_mse(net, memory.pregrid_points(), memory.pregrid_outputs()),
                          weights.beta0);
    const auto& batches = memory.batches();
    if (!batches.empty()) {
        std::vector<double> w = memory_weights(j, memory, weights.beta1);
        Tensor adapt;
        for (std::size_t i = 0; i < batches.size(); ++i) {
            Tensor term = ad::mul(batch_mse(net, batches[i].points, batches[i].outputs), w[i]);
            adapt = adapt.defined() ? ad::add(adapt, term) : term;
        }
        loss = ad::add(loss, ad::mul(adapt, 1.0 - weights.beta0));
    }
    return loss;
}

AcquiredBatch acquire_batch(const std::vector<std::vector<double>>& batch, std::size_t s_g,
                            double eps, Rng& rng) {
    if (s_g > batch.size())
        throw Error("acquire_batch: requested " + std::to_string(s_g) + " samples from batch of " +
                    std::to_string(batch.size()));
    const std::size_t d = batch.front().size();

    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (const auto& p : batch)
        for (std::size_t i = 0; i < d; ++i) mean[i] += p[i];
    for (double& v : mean) v /= static_cast<double>(batch.size());
    for (const auto& p : batch)
        for (std::size_t i = 0; i < d; ++i) {
            const double dv = p[i] - mean[i];
            var[i] += dv * dv;
        }
    for (double& v : var) v /= static_cast<double>(batch.size());

    AcquiredBatch out;
    out.indices = sample_without_replacement(rng, batch.size(), s_g);
    for (std::size_t idx : out.indices) out.points.push_back(batch[idx]);
    for (std::size_t i = 0; i < d; ++i) {
        if (std::sqrt(var[i]) < eps) {
            out.noise_added = true;
            for (auto& p : out.points) p[i] += normal_draw(rng, 0.0, eps);
        }
    }
    return out;
}

namespace {

double train_loop(SurrogateNet& net, const CalibrationMemory& memory, const LossWeights& weights,
                  long j, const SurrogateTrainConfig& cfg, bool pregrid_only) {
    ad::RmspropOptimizer opt(net.parameters(), cfg.lr, cfg.lr_decay, cfg.rho, cfg.eps);
    double last = 0.0;
    for (long it = 0; it < cfg.iterations; ++it) {
        ad::Graph g;
        Tensor loss = pregrid_only
                          ? batch_mse(net, memory.pregrid_points(), memory.pregrid_outputs())
                          : surrogate_loss(net, memory, weights, j);
        last = loss.value();
        if (!std::isfinite(last))
            throw Error("surrogate training: non-finite loss at inner iteration " +
                        std::to_string(it));
        auto grads = g.backward(loss);
        opt.step(grads);
    }
    return last;
}

}  // namespace

double update_surrogate(SurrogateNet& net, const CalibrationMemory& memory,
                        const LossWeights& weights, long j, const SurrogateTrainConfig& cfg) {
    if (cfg.iterations < 1) throw Error("update_surrogate: need at least one iteration");
    return train_loop(net, memory, weights, j, cfg, false);
}

double initial_fit(SurrogateNet& net, const CalibrationMemory& memory,
                   const SurrogateTrainConfig& cfg) {
    if (memory.pregrid_points().empty()) throw Error("initial_fit: memory holds no pre-grid");
    return train_loop(net, memory, LossWeights{}, 0, cfg, true);
}

std::string memory_csv(const CalibrationMemory& memory) {
    std::ostringstream os;
    os.precision(17);
    const std::size_t d =
        memory.pregrid_points().empty() ? 0 : memory.pregrid_points().front().size();
    const std::size_t m =
        memory.pregrid_outputs().empty() ? 0 : memory.pregrid_outputs().front().size();
    os << "alpha";
    for (std::size_t i = 0; i < d; ++i) os << ",z" << i + 1;
    for (std::size_t i = 0; i < m; ++i) os << ",f" << i + 1;
    os << "\n";
    auto write_rows = [&](long alpha, const std::vector<std::vector<double>>& pts,
                          const std::vector<std::vector<double>>& outs) {
        for (std::size_t r = 0; r < pts.size(); ++r) {
            os << alpha;
            for (double v : pts[r]) os << ',' << v;
            for (double v : outs[r]) os << ',' << v;
            os << "\n";
        }
    };
    write_rows(0, memory.pregrid_points(), memory.pregrid_outputs());
    for (const auto& b : memory.batches()) write_rows(b.index, b.points, b.outputs);
    return os.str();
}

}  // namespace nofas::surrogate
