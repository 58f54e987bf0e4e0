#ifndef NOFAS_NN_HPP
#define NOFAS_NN_HPP

#include <vector>

#include "nofas/rng.hpp"
#include "nofas/tensor.hpp"

namespace nofas::nn {

enum class InitScheme { glorot_uniform, kaiming_uniform, kaiming_normal };

InitScheme init_scheme_from_string(const std::string& s);
const char* to_string(InitScheme s);

/// Fill an [in, out] weight matrix per the chosen scheme.
ad::Tensor init_weight(std::size_t in, std::size_t out, InitScheme scheme, Rng& rng);

enum class Activation { relu, tanh };

/// Plain fully connected network, linear output layer. Weights are stored
/// [in, out] so a batch [B, in] maps with a single matmul per layer.
struct Mlp {
    std::vector<ad::Tensor> weights;
    std::vector<ad::Tensor> biases;
    Activation activation = Activation::relu;

    ad::Tensor forward(const ad::Tensor& x) const;
    std::vector<ad::Tensor> parameters() const;
    void zero_output_layer();
};

Mlp make_mlp(const std::vector<std::size_t>& dims, Activation act, InitScheme scheme, Rng& rng);

}  // namespace nofas::nn

#endif
