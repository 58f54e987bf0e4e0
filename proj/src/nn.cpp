#include "nofas/nn.hpp"

#include <cmath>

namespace nofas::nn {

using ad::Tensor;

InitScheme init_scheme_from_string(const std::string& s) {
    if (s == "glorot-uniform") return InitScheme::glorot_uniform;
    if (s == "kaiming-uniform") return InitScheme::kaiming_uniform;
    if (s == "kaiming-normal") return InitScheme::kaiming_normal;
    throw Error("unknown init scheme '" + s +
                "' (valid: glorot-uniform, kaiming-uniform, kaiming-normal)");
}

const char* to_string(InitScheme s) {
    switch (s) {
        case InitScheme::glorot_uniform: return "glorot-uniform";
        case InitScheme::kaiming_uniform: return "kaiming-uniform";
        case InitScheme::kaiming_normal: return "kaiming-normal";
    }
    return "?";
}

Tensor init_weight(std::size_t in, std::size_t out, InitScheme scheme, Rng& rng) {
    std::vector<double> w(in * out);
    switch (scheme) {
        case InitScheme::glorot_uniform: {
            const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
            for (double& v : w) v = uniform_draw(rng, -bound, bound);
            break;
        }
        case InitScheme::kaiming_uniform: {
            const double bound = std::sqrt(6.0 / static_cast<double>(in));
            for (double& v : w) v = uniform_draw(rng, -bound, bound);
            break;
        }
        case InitScheme::kaiming_normal: {
            const double std = std::sqrt(2.0 / static_cast<double>(in));
            for (double& v : w) v = normal_draw(rng, 0.0, std);
            break;
        }
    }
    return Tensor({in, out}, std::move(w), true);
}

Tensor Mlp::forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        Tensor lin = ad::matmul(h, weights[l]);
        lin = ad::add(lin, ad::broadcast(biases[l], lin.shape()));
        if (l + 1 < weights.size())
            h = activation == Activation::relu ? ad::relu(lin) : ad::tanh(lin);
        else
            h = lin;
    }
    return h;
}

std::vector<Tensor> Mlp::parameters() const {
    std::vector<Tensor> out;
    for (const Tensor& w : weights) out.push_back(w);
    for (const Tensor& b : biases) out.push_back(b);
    return out;
}

void Mlp::zero_output_layer() {
    auto wv = weights.back().mutable_data();
    for (double& v : wv) v = 0.0;
    auto bv = biases.back().mutable_data();
    for (double& v : bv) v = 0.0;
}

Mlp make_mlp(const std::vector<std::size_t>& dims, Activation act, InitScheme scheme, Rng& rng) {
    if (dims.size() < 2) throw Error("mlp: need at least input and output dims");
    Mlp net;
    net.activation = act;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        net.weights.push_back(init_weight(dims[l], dims[l + 1], scheme, rng));
        net.biases.push_back(Tensor::zeros({dims[l + 1]}, true));
    }
    return net;
}

}  // namespace nofas::nn
