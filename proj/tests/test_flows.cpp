#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nofas/flows.hpp"
#include "oracles.hpp"

using namespace nofas;
using ad::Tensor;
using namespace nofas::flows;

namespace {

bool strictly_lower_triangular(const std::vector<double>& m, std::size_t d) {
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j)
            if (m[i * d + j] != 0.0) return false;
    return true;
}

void randomize_made(MadeNetwork& net, Rng& rng, double scale = 0.5) {
    auto fill = [&](Tensor& t) {
        for (double& v : t.mutable_data()) v = normal_draw(rng, 0.0, scale);
    };
    for (auto& w : net.weights) fill(w);
    for (auto& b : net.biases) fill(b);
    fill(net.w_mu);
    fill(net.b_mu);
    fill(net.w_alpha);
    fill(net.b_alpha);
}

/// Map of one layer as a plain vector function on a single sample.
testing::VectorMap layer_map(FlowLayer& layer, std::size_t d) {
    return [&layer, d](const std::vector<double>& x) {
        Tensor in({1, d}, x);
        auto [out, ld] = layer.forward(in, false);
        (void)ld;
        return std::vector<double>(out.data().begin(), out.data().end());
    };
}

}  // namespace

TEST_CASE("made masks: product is strictly lower triangular") {
    for (std::size_t d : {2u, 3u, 5u}) {
        MadeNetwork net = build_made(d, {7, 5}, 42);
        CHECK(strictly_lower_triangular(net.connectivity(), d));
    }
}

TEST_CASE("made: d=2 connectivity allows only output 2 <- input 1") {
    MadeNetwork net = build_made(2, {3}, 0);
    auto conn = net.connectivity();
    CHECK(conn[0 * 2 + 0] == 0.0);
    CHECK(conn[0 * 2 + 1] == 0.0);
    CHECK(conn[1 * 2 + 1] == 0.0);
    CHECK(conn[1 * 2 + 0] > 0.0);
}

TEST_CASE("made rejects d < 2 and degenerate widths") {
    CHECK_THROWS_AS(build_made(1, {4}, 0), Error);
    CHECK_THROWS_AS(build_made(3, {0}, 0), Error);
}

TEST_CASE("made: numerical autoregressiveness probe at d=5") {
    MadeNetwork net = build_made(5, {100}, 3);
    Rng rng = make_rng(11);
    randomize_made(net, rng);
    std::vector<double> base = normal_vector(rng, 5);
    auto [mu0, al0] = net.forward(Tensor({1, 5}, base));
    for (std::size_t j = 0; j < 5; ++j) {
        std::vector<double> pert = base;
        pert[j] += 1e-3;
        auto [mu1, al1] = net.forward(Tensor({1, 5}, pert));
        for (std::size_t i = 0; i <= j; ++i) {
            CHECK(mu1.at(0, i) == mu0.at(0, i));
            CHECK(al1.at(0, i) == al0.at(0, i));
        }
    }
}

TEST_CASE("made: same seed gives identical masks") {
    MadeNetwork a = build_made(4, {13, 9}, 77);
    MadeNetwork b = build_made(4, {13, 9}, 77);
    REQUIRE(a.masks.size() == b.masks.size());
    for (std::size_t l = 0; l < a.masks.size(); ++l)
        for (std::size_t i = 0; i < a.masks[l].size(); ++i)
            CHECK(a.masks[l].at(i) == b.masks[l].at(i));
    for (std::size_t i = 0; i < a.out_mask.size(); ++i)
        CHECK(a.out_mask.at(i) == b.out_mask.at(i));
}

TEST_CASE("maf: zero weights give the identity with zero log-det") {
    MadeNetwork net = build_made(3, {10}, 5);
    MafLayer layer(std::move(net), {0, 1, 2});
    Tensor z({2, 3}, {0.3, -1.2, 0.7, 2.0, 0.1, -0.4});
    auto [out, ld] = layer.forward(z, true);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(out.at(i) == z.at(i));
    CHECK(ld.at(0) == 0.0);
    CHECK(ld.at(1) == 0.0);
}

TEST_CASE("maf: constant opposite log-scales cancel in the log-det") {
    MadeNetwork net = build_made(2, {4}, 5);
    net.b_alpha = Tensor({2}, {0.5, -0.5}, true);
    MafLayer layer(std::move(net), {0, 1});
    auto [out, ld] = layer.forward(Tensor({1, 2}, {0.2, 0.9}), true);
    (void)out;
    CHECK(ld.at(0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("maf: analytic log-det matches the finite-difference Jacobian") {
    for (std::size_t d : {2u, 3u, 5u}) {
        Rng rng = make_rng(100 + d);
        for (int rep = 0; rep < 5; ++rep) {
            MadeNetwork net = build_made(d, {16}, 100 * d + rep);
            randomize_made(net, rng, 0.4);
            std::vector<std::size_t> order(d);
            for (std::size_t i = 0; i < d; ++i) order[i] = rep % 2 == 0 ? i : d - 1 - i;
            MafLayer layer(std::move(net), order);
            std::vector<double> x = normal_vector(rng, d);
            auto jac = testing::fd_jacobian(layer_map(layer, d), x);
            const double fd_logdet = testing::log_abs_det(jac);
            auto [out, ld] = layer.forward(Tensor({1, d}, x), false);
            (void)out;
            CHECK(testing::rel_err(ld.at(0), fd_logdet, 1e-8) < 1e-6);
        }
    }
}

TEST_CASE("maf: transform output i ignores inputs with later degree") {
    MafLayer layer(build_made(4, {32}, 9), {0, 1, 2, 3});
    Rng rng = make_rng(21);
    randomize_made(const_cast<MadeNetwork&>(layer.made()), rng);
    std::vector<double> base = normal_vector(rng, 4);
    auto [out0, ld0] = layer.forward(Tensor({1, 4}, base), false);
    (void)ld0;
    for (std::size_t j = 0; j < 4; ++j) {
        std::vector<double> pert = base;
        pert[j] += 1e-3;
        auto [out1, ld1] = layer.forward(Tensor({1, 4}, pert), false);
        (void)ld1;
        for (std::size_t i = 0; i < j; ++i) CHECK(out1.at(0, i) == out0.at(0, i));
    }
}

TEST_CASE("coupling: zero conditioners give the identity") {
    Rng rng = make_rng(1);
    nn::Mlp mu = nn::make_mlp({2, 8, 2}, nn::Activation::relu,
                              nn::InitScheme::glorot_uniform, rng);
    nn::Mlp al = nn::make_mlp({2, 8, 2}, nn::Activation::relu,
                              nn::InitScheme::glorot_uniform, rng);
    for (auto& w : mu.weights)
        for (double& v : w.mutable_data()) v = 0.0;
    for (auto& w : al.weights)
        for (double& v : w.mutable_data()) v = 0.0;
    CouplingLayer layer(4, 2, std::move(mu), std::move(al), false);
    Tensor z({1, 4}, {0.1, -0.2, 0.3, -0.4});
    auto [out, ld] = layer.forward(z, true);
    for (std::size_t i = 0; i < 4; ++i) CHECK(out.at(i) == z.at(i));
    CHECK(ld.at(0) == 0.0);
}

TEST_CASE("coupling: pass-through half is bit-identical") {
    Rng rng = make_rng(2);
    CouplingLayer plain(5, 2,
                        nn::make_mlp({2, 16, 3}, nn::Activation::relu,
                                     nn::InitScheme::glorot_uniform, rng),
                        nn::make_mlp({2, 16, 3}, nn::Activation::relu,
                                     nn::InitScheme::glorot_uniform, rng),
                        false);
    std::vector<double> x = normal_vector(rng, 5);
    auto [out, ld] = plain.forward(Tensor({1, 5}, x), true);
    (void)ld;
    CHECK(out.at(0, 0) == x[0]);
    CHECK(out.at(0, 1) == x[1]);
}

TEST_CASE("coupling: flipped pair transforms every coordinate") {
    // With the flip toggled on consecutive layers the transformed halves
    // cover all coordinates.
    const std::size_t d = 4, split = 2;
    CHECK(split + (d - split) == d);
    Rng rng = make_rng(3);
    CouplingLayer a(d, split,
                    nn::make_mlp({split, 8, d - split}, nn::Activation::relu,
                                 nn::InitScheme::glorot_uniform, rng),
                    nn::make_mlp({split, 8, d - split}, nn::Activation::relu,
                                 nn::InitScheme::glorot_uniform, rng),
                    false);
    CouplingLayer b(d, split,
                    nn::make_mlp({split, 8, d - split}, nn::Activation::relu,
                                 nn::InitScheme::glorot_uniform, rng),
                    nn::make_mlp({split, 8, d - split}, nn::Activation::relu,
                                 nn::InitScheme::glorot_uniform, rng),
                    true);
    std::vector<double> x = normal_vector(rng, d);
    auto [mid, ld1] = a.forward(Tensor({1, d}, x), true);
    auto [out, ld2] = b.forward(mid, true);
    (void)ld1;
    (void)ld2;
    std::size_t changed = 0;
    for (std::size_t i = 0; i < d; ++i)
        if (out.at(0, i) != x[i]) ++changed;
    CHECK(changed == d);
}

TEST_CASE("coupling: jacobian is block triangular and log-det matches") {
    Rng rng = make_rng(4);
    for (int rep = 0; rep < 5; ++rep) {
        const std::size_t d = 4, split = 2;
        CouplingLayer layer(d, split,
                            nn::make_mlp({split, 16, d - split}, nn::Activation::relu,
                                         nn::InitScheme::glorot_uniform, rng),
                            nn::make_mlp({split, 16, d - split}, nn::Activation::relu,
                                         nn::InitScheme::glorot_uniform, rng),
                            false);
        std::vector<double> x = normal_vector(rng, d);
        auto jac = testing::fd_jacobian(layer_map(layer, d), x);
        for (std::size_t i = 0; i < split; ++i)
            for (std::size_t j = split; j < d; ++j)
                CHECK(std::abs(jac[i][j]) < 1e-7);
        const double fd_logdet = testing::log_abs_det(jac);
        auto [out, ld] = layer.forward(Tensor({1, d}, x), false);
        (void)out;
        CHECK(testing::rel_err(ld.at(0), fd_logdet, 1e-8) < 1e-6);
    }
}

TEST_CASE("batchnorm: train mode normalizes and needs batch >= 2") {
    BatchNormLayer layer(2);
    Rng rng = make_rng(6);
    Tensor z({64, 2}, normal_vector(rng, 128, 3.0, 2.0));
    auto [out, ld] = layer.forward(z, true);
    (void)ld;
    for (std::size_t c = 0; c < 2; ++c) {
        double m = 0.0, v = 0.0;
        for (std::size_t r = 0; r < 64; ++r) m += out.at(r, c);
        m /= 64.0;
        for (std::size_t r = 0; r < 64; ++r) v += (out.at(r, c) - m) * (out.at(r, c) - m);
        v /= 64.0;
        CHECK(m == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(v == doctest::Approx(1.0).epsilon(1e-4));  // 1/(1+eps/v)
    }
    CHECK_THROWS_AS(layer.forward(Tensor({1, 2}, {1.0, 2.0}), true), Error);
}

TEST_CASE("batchnorm: running variance 1-eps makes the log-det vanish") {
    BatchNormLayer layer(3, 1e-5);
    layer.set_running_stats({0.0, 0.0, 0.0}, {1.0 - 1e-5, 1.0 - 1e-5, 1.0 - 1e-5});
    auto [out, ld] = layer.forward(Tensor({2, 3}, std::vector<double>(6, 0.5)), false);
    (void)out;
    CHECK(ld.at(0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("batchnorm: log-det matches the frozen-statistics jacobian") {
    Rng rng = make_rng(8);
    for (int rep = 0; rep < 5; ++rep) {
        BatchNormLayer layer(2);
        for (double& v : layer.gamma().mutable_data()) v = normal_draw(rng, 0.0, 0.3);
        for (double& v : layer.beta().mutable_data()) v = normal_draw(rng, 0.0, 0.3);
        layer.set_running_stats({normal_draw(rng), normal_draw(rng)},
                                {0.5 + std::abs(normal_draw(rng)), 0.5 + std::abs(normal_draw(rng))});
        std::vector<double> x = normal_vector(rng, 2);
        auto jac = testing::fd_jacobian(layer_map(layer, 2), x);
        const double fd_logdet = testing::log_abs_det(jac);
        auto [out, ld] = layer.forward(Tensor({1, 2}, x), false);
        (void)out;
        CHECK(testing::rel_err(ld.at(0), fd_logdet, 1e-8) < 1e-6);
    }
}

TEST_CASE("flow_sample: empty stack returns the base samples") {
    FlowStack stack;
    stack.dim = 3;
    FlowSample s = flow_sample(stack, 8, std::uint64_t{42});
    for (std::size_t i = 0; i < s.z0.size(); ++i) CHECK(s.z_k.at(i) == s.z0.at(i));
    Tensor expect = standard_normal_log_density(s.z0);
    for (std::size_t i = 0; i < 8; ++i) CHECK(s.log_q.at(i) == doctest::Approx(expect.at(i)));
}

TEST_CASE("flow_sample: identity-initialized maf stack is the identity") {
    FlowStack stack;
    stack.dim = 2;
    stack.layers.push_back(std::make_unique<MafLayer>(build_made(2, {10}, 1),
                                                      std::vector<std::size_t>{0, 1}));
    stack.layers.push_back(std::make_unique<MafLayer>(build_made(2, {10}, 2),
                                                      std::vector<std::size_t>{1, 0}));
    FlowSample s = flow_sample(stack, 5, std::uint64_t{9});
    for (std::size_t i = 0; i < s.z0.size(); ++i) CHECK(s.z_k.at(i) == s.z0.at(i));
}

TEST_CASE("flow_sample: density matches the numerical change of variables at d=2") {
    FlowSpec spec;
    spec.kind = FlowKind::realnvp;
    spec.dim = 2;
    spec.n_affine_layers = 3;
    spec.hidden = 12;
    FlowStack stack = init_flow(spec, 31);
    Rng rng = make_rng(17);
    // Perturb parameters away from the identity and warm the running stats.
    for (Tensor& p : stack.parameters())
        for (double& v : p.mutable_data()) v += normal_draw(rng, 0.0, 0.05);
    for (int i = 0; i < 20; ++i) flow_sample(stack, 64, rng, true);

    FlowSample s = flow_sample(stack, 200, rng, false);
    testing::VectorMap full_map = [&stack](const std::vector<double>& x) {
        auto [out, ld] = stack.transform(Tensor({1, 2}, x), false);
        (void)ld;
        return std::vector<double>(out.data().begin(), out.data().end());
    };
    double total = 0.0;
    for (std::size_t i = 0; i < 200; ++i) {
        std::vector<double> z0{s.z0.at(i, 0), s.z0.at(i, 1)};
        auto jac = testing::fd_jacobian(full_map, z0);
        const double true_log_q =
            standard_normal_log_density(Tensor({1, 2}, z0)).value() - testing::log_abs_det(jac);
        const double ratio = std::exp(s.log_q.at(i) - true_log_q);
        CHECK(ratio == doctest::Approx(1.0).epsilon(1e-4));
        total += ratio;
    }
    CHECK(total / 200.0 == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("init_flow: glorot bounds hold and alpha heads start at zero") {
    Rng rng = make_rng(0);
    Tensor w = nn::init_weight(100, 100, nn::InitScheme::glorot_uniform, rng);
    const double bound = std::sqrt(6.0 / 200.0);
    for (double v : w.data()) {
        CHECK(v <= bound);
        CHECK(v >= -bound);
    }

    FlowSpec spec;
    spec.kind = FlowKind::maf;
    spec.dim = 3;
    spec.n_affine_layers = 4;
    FlowStack stack = init_flow(spec, 5);
    FlowSample s = flow_sample(stack, 32, std::uint64_t{3});
    (void)s;
    for (const auto& layer : stack.layers) {
        if (layer->kind() != "maf") continue;
        auto& maf = dynamic_cast<MafLayer&>(*layer);
        auto [out, ld] = maf.forward(Tensor({2, 3}, normal_vector(rng, 6)), true);
        (void)out;
        CHECK(ld.at(0) == 0.0);  // alpha head still zero right after init
    }
}

TEST_CASE("init_flow: identical seeds give bit-identical stacks and samples") {
    FlowSpec spec;
    spec.kind = FlowKind::realnvp;
    spec.dim = 4;
    spec.n_affine_layers = 3;
    FlowStack a = init_flow(spec, 123);
    FlowStack b = init_flow(spec, 123);
    auto pa = a.parameters(), pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::size_t j = 0; j < pa[i].size(); ++j) CHECK(pa[i].at(j) == pb[i].at(j));
    FlowSample sa = flow_sample(a, 16, std::uint64_t{77});
    FlowSample sb = flow_sample(b, 16, std::uint64_t{77});
    for (std::size_t i = 0; i < sa.z_k.size(); ++i) CHECK(sa.z_k.at(i) == sb.z_k.at(i));
    for (std::size_t i = 0; i < 16; ++i) CHECK(sa.log_q.at(i) == sb.log_q.at(i));
}

TEST_CASE("init_flow rejects unknown schemes by name") {
    CHECK_THROWS_WITH_AS(nn::init_scheme_from_string("xavier"),
                         doctest::Contains("glorot-uniform"), Error);
}

TEST_CASE("flow gradient matches finite differences on a small stack") {
    FlowSpec spec;
    spec.kind = FlowKind::maf;
    spec.dim = 2;
    spec.n_affine_layers = 2;
    spec.hidden = 8;
    FlowStack stack = init_flow(spec, 19);
    Rng rng = make_rng(23);
    for (Tensor& p : stack.parameters())
        for (double& v : p.mutable_data()) v += normal_draw(rng, 0.0, 0.05);

    Tensor z0({16, 2}, normal_vector(rng, 32));
    auto loss_value = [&]() {
        auto [zk, ld] = stack.transform(z0, true);
        (void)zk;
        Tensor log_q = ad::sub(standard_normal_log_density(z0), ld);
        return ad::mean(log_q).value();
    };

    ad::Graph g;
    auto [zk, ld] = stack.transform(z0, true);
    (void)zk;
    Tensor loss = ad::mean(ad::sub(standard_normal_log_density(z0), ld));
    auto grads = g.backward(loss);

    std::size_t checked = 0;
    for (Tensor& p : stack.parameters()) {
        const Tensor& gp = grads.at(p);
        for (std::size_t i = 0; i < p.size(); i += 3) {  // subsample for speed
            auto data = p.mutable_data();
            const double keep = data[i];
            const double h = 1e-6;
            data[i] = keep + h;
            const double up = loss_value();
            data[i] = keep - h;
            const double down = loss_value();
            data[i] = keep;
            const double fd = (up - down) / (2.0 * h);
            CHECK(testing::rel_err(gp.at(i), fd, 1e-7) < 1e-4);
            ++checked;
        }
    }
    CHECK(checked >= 50);
}
