#ifndef NOFAS_SURROGATE_HPP
#define NOFAS_SURROGATE_HPP

#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "nofas/nn.hpp"
#include "nofas/rng.hpp"
#include "nofas/tensor.hpp"

namespace nofas::surrogate {

using ad::Tensor;

/// Full tensor-product grid, equally spaced and inclusive of both bounds.
std::vector<std::vector<double>> make_pregrid(
    const std::vector<std::pair<double, double>>& bounds, const std::vector<std::size_t>& counts);

struct CalibrationBatch {
    long index = 0;  // acquisition index (1-based)
    std::vector<std::vector<double>> points;
    std::vector<std::vector<double>> outputs;
};

/// Pre-grid plus a bounded FIFO of calibration batches; pushing beyond the
/// capacity evicts the oldest batch. Every stored point carries its true
/// model output.
class CalibrationMemory {
public:
    explicit CalibrationMemory(std::size_t capacity = 20);

    void set_pregrid(std::vector<std::vector<double>> points,
                     std::vector<std::vector<double>> outputs);
    void push(CalibrationBatch batch);

    std::size_t capacity() const { return capacity_; }
    const std::vector<std::vector<double>>& pregrid_points() const { return pregrid_points_; }
    const std::vector<std::vector<double>>& pregrid_outputs() const { return pregrid_outputs_; }
    const std::deque<CalibrationBatch>& batches() const { return batches_; }
    long latest_index() const { return batches_.empty() ? 0 : batches_.back().index; }
    std::size_t pregrid_size() const { return pregrid_points_.size(); }

private:
    std::size_t capacity_;
    std::vector<std::vector<double>> pregrid_points_, pregrid_outputs_;
    std::deque<CalibrationBatch> batches_;
};

struct LossWeights {
    double beta0 = 0.5;
    double beta1 = 0.1;
};

/// Normalized exponential-decay weights over the stored batches: batch at
/// acquisition index a gets weight proportional to exp(-beta1*(j-a)).
std::vector<double> memory_weights(long j, const CalibrationMemory& memory, double beta1);

/// Fully connected surrogate of the forward map, trained on standardized
/// outputs (per-output mean/std frozen from the pre-grid).
class SurrogateNet {
public:
    SurrogateNet(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed,
                 std::vector<std::size_t> hidden = {64, 32});

    void fit_standardization(const std::vector<std::vector<double>>& outputs);
    /// Inputs are standardized per coordinate with statistics frozen from the
    /// pre-grid, keeping the tanh layers in range whatever the latent box.
    void fit_input_standardization(const std::vector<std::vector<double>>& points);

    /// Raw network output (standardized space), traced.
    Tensor forward_standardized(const Tensor& z) const;
    /// De-standardized prediction, traced.
    Tensor forward(const Tensor& z) const;
    /// Untraced single-point prediction.
    std::vector<double> predict(std::span<const double> z) const;

    std::vector<Tensor> parameters() const { return net_.parameters(); }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const { return output_dim_; }
    const std::vector<double>& output_mean() const { return out_mean_; }
    const std::vector<double>& output_std() const { return out_std_; }
    std::vector<double> standardize(std::span<const double> y) const;

private:
    std::size_t input_dim_, output_dim_;
    nn::Mlp net_;
    std::vector<double> out_mean_, out_std_;
    std::vector<double> in_mean_, in_std_;
};

/// Weighted surrogate training loss: beta0 times the pre-grid mean squared
/// error plus (1-beta0) times the decay-weighted mean squared errors of the
/// stored calibration batches, all in standardized output space.
Tensor surrogate_loss(const SurrogateNet& net, const CalibrationMemory& memory,
                      const LossWeights& weights, long j);

struct AcquiredBatch {
    std::vector<std::size_t> indices;
    std::vector<std::vector<double>> points;
    bool noise_added = false;
};

/// Uniform subsample without replacement; coordinates whose full-batch
/// standard deviation falls below `eps` get independent N(0, eps^2) noise.
AcquiredBatch acquire_batch(const std::vector<std::vector<double>>& batch, std::size_t s_g,
                            double eps, Rng& rng);

struct SurrogateTrainConfig {
    long iterations = 1000;
    double lr = 0.01;
    double lr_decay = 0.999;
    double rho = 0.9;
    double eps = 1e-8;
};

/// T_S RMSprop steps on the weighted loss; the learning-rate schedule (and
/// moment state) restarts at every call. Returns the final loss value.
double update_surrogate(SurrogateNet& net, const CalibrationMemory& memory,
                        const LossWeights& weights, long j, const SurrogateTrainConfig& cfg);

/// Fit on the pre-grid alone (the full weight is on the pre-grid term).
double initial_fit(SurrogateNet& net, const CalibrationMemory& memory,
                   const SurrogateTrainConfig& cfg);

struct SurrogateState {
    SurrogateNet net;
    CalibrationMemory memory;
};

/// Rows: acquisition index (0 for the pre-grid), z coordinates, true outputs.
std::string memory_csv(const CalibrationMemory& memory);

}  // namespace nofas::surrogate

#endif
