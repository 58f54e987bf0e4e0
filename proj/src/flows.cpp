#include "nofas/flows.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nofas::flows {

namespace {

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

Tensor permutation_matrix(const std::vector<std::size_t>& order) {
    const std::size_t d = order.size();
    std::vector<double> m(d * d, 0.0);
    // column j of z*P picks input coordinate order[j]
    for (std::size_t j = 0; j < d; ++j) m[order[j] * d + j] = 1.0;
    return Tensor({d, d}, std::move(m));
}

Tensor transpose_of(const Tensor& p) {
    const std::size_t d = p.shape()[0];
    std::vector<double> m(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) m[j * d + i] = p.at(i, j);
    return Tensor({d, d}, std::move(m));
}

}  // namespace

// ---------------------------------------------------------------------------
// MADE

MadeNetwork build_made(std::size_t d, const std::vector<std::size_t>& hidden,
                       std::uint64_t seed) {
    if (d < 2) throw Error("made: autoregressive masks need d >= 2");
    for (std::size_t w : hidden)
        if (w < 1) throw Error("made: hidden widths must be >= 1");

    MadeNetwork net;
    net.dim = d;
    net.hidden_widths = hidden;

    Rng rng = make_rng(seed);
    const std::size_t n_deg = d - 1;
    for (std::size_t l = 0; l < hidden.size(); ++l) {
        std::uniform_int_distribution<std::size_t> off(0, n_deg - 1);
        const std::size_t offset = off(rng);
        std::vector<int> m(hidden[l]);
        for (std::size_t k = 0; k < hidden[l]; ++k)
            m[k] = static_cast<int>(1 + (offset + k) % n_deg);
        net.degrees.push_back(std::move(m));
    }

    // Masks stored [in, out] to match the weight layout.
    std::size_t prev = d;
    for (std::size_t l = 0; l < hidden.size(); ++l) {
        const std::size_t w = hidden[l];
        std::vector<double> mask(prev * w, 0.0);
        for (std::size_t u = 0; u < w; ++u) {
            for (std::size_t v = 0; v < prev; ++v) {
                const int deg_in = l == 0 ? static_cast<int>(v + 1) : net.degrees[l - 1][v];
                if (net.degrees[l][u] >= deg_in) mask[v * w + u] = 1.0;
            }
        }
        net.masks.emplace_back(ad::Shape{prev, w}, std::move(mask));
        prev = w;
    }
    {
        std::vector<double> mask(prev * d, 0.0);
        for (std::size_t u = 0; u < d; ++u)
            for (std::size_t v = 0; v < prev; ++v)
                if (static_cast<int>(u + 1) > net.degrees.back()[v]) mask[v * d + u] = 1.0;
        net.out_mask = Tensor({prev, d}, std::move(mask));
    }

    // Zero weights; init_flow draws real values.
    prev = d;
    for (std::size_t l = 0; l < hidden.size(); ++l) {
        net.weights.push_back(Tensor::zeros({prev, hidden[l]}, true));
        net.biases.push_back(Tensor::zeros({hidden[l]}, true));
        prev = hidden[l];
    }
    net.w_mu = Tensor::zeros({prev, d}, true);
    net.b_mu = Tensor::zeros({d}, true);
    net.w_alpha = Tensor::zeros({prev, d}, true);
    net.b_alpha = Tensor::zeros({d}, true);
    return net;
}

std::pair<Tensor, Tensor> MadeNetwork::forward(const Tensor& z) const {
    Tensor h = z;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        Tensor lin = ad::matmul(h, ad::mul(weights[l], masks[l]));
        h = ad::relu(ad::add(lin, ad::broadcast(biases[l], lin.shape())));
    }
    Tensor mu = ad::matmul(h, ad::mul(w_mu, out_mask));
    mu = ad::add(mu, ad::broadcast(b_mu, mu.shape()));
    Tensor alpha = ad::matmul(h, ad::mul(w_alpha, out_mask));
    alpha = ad::add(alpha, ad::broadcast(b_alpha, alpha.shape()));
    return {mu, alpha};
}

std::vector<Tensor> MadeNetwork::parameters() const {
    std::vector<Tensor> out;
    for (const Tensor& w : weights) out.push_back(w);
    for (const Tensor& b : biases) out.push_back(b);
    out.push_back(w_mu);
    out.push_back(b_mu);
    out.push_back(w_alpha);
    out.push_back(b_alpha);
    return out;
}

std::vector<double> MadeNetwork::connectivity() const {
    // (mask_out^T * ... * mask_1^T)[output u, input v]
    const std::size_t d = dim;
    // Product of masks, built input->output starting from the identity.
    std::vector<double> reach(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) reach[i * d + i] = 1.0;
    std::size_t rows = d;
    auto apply = [&](const Tensor& mask) {
        const std::size_t out_w = mask.shape()[1];
        std::vector<double> next(out_w * d, 0.0);
        for (std::size_t u = 0; u < out_w; ++u)
            for (std::size_t r = 0; r < rows; ++r)
                if (mask.at(r, u) != 0.0)
                    for (std::size_t v = 0; v < d; ++v) next[u * d + v] += reach[r * d + v];
        reach = std::move(next);
        rows = out_w;
    };
    for (const Tensor& m : masks) apply(m);
    apply(out_mask);
    return reach;
}

// ---------------------------------------------------------------------------
// MAF layer

MafLayer::MafLayer(MadeNetwork made, std::vector<std::size_t> order)
    : made_(std::move(made)), order_(std::move(order)) {
    if (order_.size() != made_.dim) throw Error("maf: order length must equal dim");
    perm_ = permutation_matrix(order_);
    unperm_ = transpose_of(perm_);
}

std::pair<Tensor, Tensor> MafLayer::forward(const Tensor& z, bool) {
    Tensor zp = ad::matmul(z, perm_);
    auto [mu, alpha] = made_.forward(zp);
    if (!all_finite(alpha.data()))
        throw Error("maf: non-finite log-scale output");
    Tensor zt = ad::add(ad::mul(zp, ad::exp(alpha)), mu);
    Tensor out = ad::matmul(zt, unperm_);
    Tensor log_det = ad::sum(alpha, 1);
    return {out, log_det};
}

std::vector<Tensor> MafLayer::parameters() const { return made_.parameters(); }

// ---------------------------------------------------------------------------
// Coupling layer

CouplingLayer::CouplingLayer(std::size_t dim, std::size_t split, nn::Mlp mu_net,
                             nn::Mlp alpha_net, bool flip)
    : dim_(dim), split_(split), mu_net_(std::move(mu_net)), alpha_net_(std::move(alpha_net)),
      flip_(flip) {
    if (split_ < 1 || split_ >= dim_)
        throw Error("coupling: split index must satisfy 1 <= d' < d");
    std::vector<std::size_t> rev(dim_);
    for (std::size_t i = 0; i < dim_; ++i) rev[i] = dim_ - 1 - i;
    reverse_ = permutation_matrix(rev);
}

std::pair<Tensor, Tensor> CouplingLayer::forward(const Tensor& z, bool) {
    Tensor x = flip_ ? ad::matmul(z, reverse_) : z;
    Tensor keep = ad::slice(x, 1, 0, split_);
    Tensor rest = ad::slice(x, 1, split_, dim_ - split_);
    Tensor mu = mu_net_.forward(keep);
    Tensor alpha = alpha_net_.forward(keep);
    if (!all_finite(alpha.data()))
        throw Error("coupling: non-finite log-scale output");
    Tensor transformed = ad::add(ad::mul(rest, ad::exp(alpha)), mu);
    Tensor out = ad::concat(keep, transformed, 1);
    if (flip_) out = ad::matmul(out, reverse_);
    Tensor log_det = ad::sum(alpha, 1);
    return {out, log_det};
}

std::vector<Tensor> CouplingLayer::parameters() const {
    std::vector<Tensor> out = mu_net_.parameters();
    for (const Tensor& t : alpha_net_.parameters()) out.push_back(t);
    return out;
}

// ---------------------------------------------------------------------------
// Batch normalization layer

BatchNormLayer::BatchNormLayer(std::size_t dim, double eps, double momentum)
    : dim_(dim), eps_(eps), momentum_(momentum) {
    beta_ = Tensor::zeros({dim}, true);
    gamma_ = Tensor::zeros({dim}, true);
    running_mean_.assign(dim, 0.0);
    running_var_.assign(dim, 1.0);
}

void BatchNormLayer::set_running_stats(std::vector<double> mean, std::vector<double> var) {
    if (mean.size() != dim_ || var.size() != dim_)
        throw Error("batchnorm: running stats dimension mismatch");
    running_mean_ = std::move(mean);
    running_var_ = std::move(var);
}

std::pair<Tensor, Tensor> BatchNormLayer::forward(const Tensor& z, bool train) {
    const std::size_t batch = z.shape()[0];
    Tensor m, v;
    if (train) {
        if (batch < 2) throw Error("batchnorm: train mode needs batch size >= 2");
        m = ad::mean(z, 0);
        Tensor diff = ad::sub(z, ad::broadcast(m, z.shape()));
        v = ad::mean(ad::square(diff), 0);
        for (std::size_t i = 0; i < dim_; ++i) {
            running_mean_[i] = (1.0 - momentum_) * running_mean_[i] + momentum_ * m.at(i);
            running_var_[i] = (1.0 - momentum_) * running_var_[i] + momentum_ * v.at(i);
        }
    } else {
        m = Tensor({dim_}, running_mean_);
        v = Tensor({dim_}, running_var_);
    }
    Tensor half_log_var = ad::mul(ad::log(ad::add(v, eps_)), 0.5);
    Tensor log_scale = ad::sub(gamma_, half_log_var);        // [d]
    Tensor scale = ad::exp(log_scale);
    Tensor centered = ad::sub(z, ad::broadcast(m, z.shape()));
    Tensor out = ad::add(ad::mul(centered, ad::broadcast(scale, z.shape())),
                         ad::broadcast(beta_, z.shape()));
    Tensor log_det = ad::broadcast(ad::sum(log_scale), ad::Shape{batch});
    return {out, log_det};
}

std::vector<Tensor> BatchNormLayer::parameters() const { return {beta_, gamma_}; }

// ---------------------------------------------------------------------------
// Stack construction and sampling

FlowKind flow_kind_from_string(const std::string& s) {
    if (s == "realnvp") return FlowKind::realnvp;
    if (s == "maf") return FlowKind::maf;
    throw Error("unknown flow type '" + s + "' (valid: realnvp, maf)");
}

const char* to_string(FlowKind k) {
    return k == FlowKind::realnvp ? "realnvp" : "maf";
}

std::vector<Tensor> FlowStack::parameters() const {
    std::vector<Tensor> out;
    for (const auto& layer : layers)
        for (const Tensor& t : layer->parameters()) out.push_back(t);
    return out;
}

std::pair<Tensor, Tensor> FlowStack::transform(const Tensor& z0, bool train) const {
    Tensor x = z0;
    Tensor total = Tensor::zeros({z0.shape()[0]});
    for (std::size_t k = 0; k < layers.size(); ++k) {
        try {
            auto [next, ld] = layers[k]->forward(x, train);
            x = next;
            total = ad::add(total, ld);
        } catch (const Error& e) {
            throw Error("flow layer " + std::to_string(k) + " (" + layers[k]->kind() +
                        "): " + e.what());
        }
    }
    return {x, total};
}

FlowStack init_flow(const FlowSpec& spec, std::uint64_t seed) {
    if (spec.dim < 2) throw Error("flow: dim must be >= 2");
    FlowStack stack;
    stack.dim = spec.dim;
    Rng rng = make_rng(seed);

    std::vector<std::size_t> identity(spec.dim), reversed(spec.dim);
    for (std::size_t i = 0; i < spec.dim; ++i) {
        identity[i] = i;
        reversed[i] = spec.dim - 1 - i;
    }

    for (std::size_t k = 0; k < spec.n_affine_layers; ++k) {
        if (spec.batchnorm)
            stack.layers.push_back(std::make_unique<BatchNormLayer>(spec.dim));
        if (spec.kind == FlowKind::maf) {
            MadeNetwork made = build_made(spec.dim, {spec.hidden}, seed + 1000 * (k + 1));
            for (Tensor& w : made.weights) {
                Tensor init = nn::init_weight(w.shape()[0], w.shape()[1], spec.init, rng);
                std::copy(init.data().begin(), init.data().end(), w.mutable_data().begin());
            }
            {
                Tensor init =
                    nn::init_weight(made.w_mu.shape()[0], made.w_mu.shape()[1], spec.init, rng);
                std::copy(init.data().begin(), init.data().end(),
                          made.w_mu.mutable_data().begin());
            }
            // alpha head stays zero: the initial map is near-identity
            const bool rev = spec.permute && (k % 2 == 1);
            stack.layers.push_back(
                std::make_unique<MafLayer>(std::move(made), rev ? reversed : identity));
        } else {
            const std::size_t split = spec.dim / 2;
            nn::Mlp mu_net =
                nn::make_mlp({split, spec.hidden, spec.dim - split},
                             nn::Activation::relu, spec.init, rng);
            nn::Mlp alpha_net =
                nn::make_mlp({split, spec.hidden, spec.dim - split},
                             nn::Activation::relu, spec.init, rng);
            alpha_net.zero_output_layer();
            stack.layers.push_back(std::make_unique<CouplingLayer>(
                spec.dim, split, std::move(mu_net), std::move(alpha_net), k % 2 == 1));
        }
    }
    return stack;
}

Tensor standard_normal_log_density(const Tensor& z) {
    const std::size_t b = z.shape()[0];
    const std::size_t d = z.shape()[1];
    const double c = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
    std::vector<double> out(b, c);
    auto zv = z.data();
    for (std::size_t r = 0; r < b; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double x = zv[r * d + i];
            s += x * x;
        }
        out[r] -= 0.5 * s;
    }
    return Tensor({b}, std::move(out));
}

FlowSample flow_sample(const FlowStack& stack, std::size_t batch, Rng& rng, bool train) {
    if (batch < 1) throw Error("flow_sample: batch must be >= 1");
    Tensor z0({batch, stack.dim}, normal_vector(rng, batch * stack.dim));
    auto [zk, log_det] = stack.transform(z0, train);
    Tensor log_q = ad::sub(standard_normal_log_density(z0), log_det);
    return FlowSample{z0, zk, log_q};
}

FlowSample flow_sample(const FlowStack& stack, std::size_t batch, std::uint64_t seed,
                       bool train) {
    Rng rng = make_rng(seed);
    return flow_sample(stack, batch, rng, train);
}

}  // namespace nofas::flows
