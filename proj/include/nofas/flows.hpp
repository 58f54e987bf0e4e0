#ifndef NOFAS_FLOWS_HPP
#define NOFAS_FLOWS_HPP

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "nofas/nn.hpp"
#include "nofas/rng.hpp"
#include "nofas/tensor.hpp"

namespace nofas::flows {

using ad::Tensor;

/// Masked autoencoder with two output heads (shift and log-scale) sharing the
/// same hidden trunk and masks. Weights are stored [in, out]; masks likewise.
struct MadeNetwork {
    std::size_t dim = 0;
    std::vector<std::size_t> hidden_widths;
    std::vector<std::vector<int>> degrees;  // per hidden layer, values in 1..d-1

    std::vector<Tensor> weights;  // hidden path, [in, out]
    std::vector<Tensor> biases;
    std::vector<Tensor> masks;    // constant 0/1 tensors matching `weights`
    Tensor w_mu, b_mu, w_alpha, b_alpha;
    Tensor out_mask;  // [h_last, dim]

    /// (mu, alpha), each [B, d].
    std::pair<Tensor, Tensor> forward(const Tensor& z) const;
    std::vector<Tensor> parameters() const;

    /// Product of masks along the network, output x input; strictly lower
    /// triangular when the masks are valid.
    std::vector<double> connectivity() const;
};

/// Degrees cycle over 1..d-1 starting at a seed-dependent offset.
MadeNetwork build_made(std::size_t d, const std::vector<std::size_t>& hidden, std::uint64_t seed);

class FlowLayer {
public:
    virtual ~FlowLayer() = default;
    /// Maps a batch [B, d] to ([B, d], per-sample log|det|).
    virtual std::pair<Tensor, Tensor> forward(const Tensor& z, bool train) = 0;
    virtual std::vector<Tensor> parameters() const = 0;
    virtual std::string kind() const = 0;
};

/// Masked autoregressive affine layer: z' = z*exp(alpha) + mu with (mu, alpha)
/// from a MADE pass over the inputs, taken under `order`.
class MafLayer : public FlowLayer {
public:
    MafLayer(MadeNetwork made, std::vector<std::size_t> order);
    std::pair<Tensor, Tensor> forward(const Tensor& z, bool train) override;
    std::vector<Tensor> parameters() const override;
    std::string kind() const override { return "maf"; }
    const MadeNetwork& made() const { return made_; }
    const std::vector<std::size_t>& order() const { return order_; }

private:
    MadeNetwork made_;
    std::vector<std::size_t> order_;
    Tensor perm_, unperm_;  // constant permutation matrices
};

/// Affine coupling layer. Coordinates [0, split) pass through unchanged and
/// condition the affine transform of the rest; `flip` reverses the coordinate
/// order before and after so stacks alternate which half is transformed.
class CouplingLayer : public FlowLayer {
public:
    CouplingLayer(std::size_t dim, std::size_t split, nn::Mlp mu_net, nn::Mlp alpha_net,
                  bool flip);
    std::pair<Tensor, Tensor> forward(const Tensor& z, bool train) override;
    std::vector<Tensor> parameters() const override;
    std::string kind() const override { return "coupling"; }
    std::size_t split() const { return split_; }
    bool flipped() const { return flip_; }
    nn::Mlp& mu_net() { return mu_net_; }
    nn::Mlp& alpha_net() { return alpha_net_; }

private:
    std::size_t dim_, split_;
    nn::Mlp mu_net_, alpha_net_;
    bool flip_;
    Tensor reverse_;  // constant reversal matrix, used when flip_carrier
};

class BatchNormLayer : public FlowLayer {
public:
    explicit BatchNormLayer(std::size_t dim, double eps = 1e-5, double momentum = 0.1);
    std::pair<Tensor, Tensor> forward(const Tensor& z, bool train) override;
    std::vector<Tensor> parameters() const override;
    std::string kind() const override { return "batchnorm"; }

    const std::vector<double>& running_mean() const { return running_mean_; }
    const std::vector<double>& running_var() const { return running_var_; }
    void set_running_stats(std::vector<double> mean, std::vector<double> var);
    Tensor& beta() { return beta_; }
    Tensor& gamma() { return gamma_; }
    double eps() const { return eps_; }

private:
    std::size_t dim_;
    Tensor beta_, gamma_;
    double eps_, momentum_;
    std::vector<double> running_mean_, running_var_;
};

enum class FlowKind { realnvp, maf };
FlowKind flow_kind_from_string(const std::string& s);
const char* to_string(FlowKind k);

struct FlowSpec {
    FlowKind kind = FlowKind::realnvp;
    std::size_t dim = 2;
    std::size_t n_affine_layers = 5;
    std::size_t hidden = 100;
    bool batchnorm = true;
    bool permute = true;  // reverse coordinate order between consecutive layers
    nn::InitScheme init = nn::InitScheme::glorot_uniform;
};

struct FlowStack {
    std::size_t dim = 0;
    std::vector<std::unique_ptr<FlowLayer>> layers;

    std::vector<Tensor> parameters() const;
    /// (z_K, per-sample accumulated log|det|). Layer failures are rethrown
    /// with the layer index attached.
    std::pair<Tensor, Tensor> transform(const Tensor& z0, bool train) const;
};

/// Alpha heads start at zero so every affine layer begins as (near) identity.
FlowStack init_flow(const FlowSpec& spec, std::uint64_t seed);

struct FlowSample {
    Tensor z0;
    Tensor z_k;
    Tensor log_q;  // per-sample log density under the flow
};

/// log N(z; 0, I) per row of a [B, d] batch, as an untraced tensor.
Tensor standard_normal_log_density(const Tensor& z);

FlowSample flow_sample(const FlowStack& stack, std::size_t batch, Rng& rng, bool train = true);
FlowSample flow_sample(const FlowStack& stack, std::size_t batch, std::uint64_t seed,
                       bool train = true);

}  // namespace nofas::flows

#endif
