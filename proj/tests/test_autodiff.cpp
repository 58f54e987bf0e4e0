#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nofas/optim.hpp"
#include "nofas/tensor.hpp"
#include "oracles.hpp"

using namespace nofas;
using ad::Tensor;

TEST_CASE("elementwise forward values") {
    Tensor a({2}, {1, 2}), b({2}, {3, 4});
    auto r = ad::add(a, b);
    CHECK(r.at(0) == 4.0);
    CHECK(r.at(1) == 6.0);
    CHECK(ad::exp(Tensor({1}, {0})).value() == 1.0);
    CHECK(ad::sub(a, b).at(0) == -2.0);
    CHECK(ad::mul(a, b).at(1) == 8.0);
    CHECK(ad::div(b, a).at(1) == 2.0);
}

TEST_CASE("matmul identity maps a vector to itself") {
    Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor v({3}, {0.5, -2.0, 7.25});
    auto r = ad::matmul(eye, v);
    for (std::size_t i = 0; i < 3; ++i) CHECK(r.at(i) == v.at(i));
}

TEST_CASE("shape mismatch errors name the op and shapes") {
    Tensor a({2}, {1, 2}), b({3}, {1, 2, 3});
    CHECK_THROWS_WITH_AS(ad::add(a, b), doctest::Contains("add"), Error);
    CHECK_THROWS_AS(ad::matmul(Tensor({2, 2}, {1, 2, 3, 4}), b), Error);
}

TEST_CASE("log rejects non-positive inputs") {
    CHECK_THROWS_AS(ad::log(Tensor({2}, {1.0, 0.0})), Error);
    CHECK_THROWS_AS(ad::log(Tensor({1}, {-3.0})), Error);
}

TEST_CASE("backward: sum of squares") {
    Tensor w({3}, {1, 2, 3}, true);
    ad::Graph g;
    Tensor root = ad::sum(ad::square(w));
    auto grads = g.backward(root);
    const Tensor& gw = grads.at(w);
    CHECK(gw.at(0) == doctest::Approx(2.0));
    CHECK(gw.at(1) == doctest::Approx(4.0));
    CHECK(gw.at(2) == doctest::Approx(6.0));
}

TEST_CASE("backward: product rule through exp") {
    Tensor a = Tensor::scalar(0.0, true);
    Tensor b = Tensor::scalar(2.0, true);
    ad::Graph g;
    Tensor root = ad::mul(ad::exp(a), b);
    auto grads = g.backward(root);
    CHECK(grads.at(a).value() == doctest::Approx(2.0));
    CHECK(grads.at(b).value() == doctest::Approx(1.0));
}

TEST_CASE("backward requires a scalar traced root") {
    Tensor w({2}, {1, 2}, true);
    ad::Graph g;
    Tensor y = ad::square(w);
    CHECK_THROWS_AS(g.backward(y), Error);
    Tensor untraced = Tensor::scalar(1.0);
    CHECK_THROWS_AS(g.backward(untraced), Error);
}

TEST_CASE("double use of one leaf accumulates both contributions") {
    Tensor x = Tensor::scalar(3.0, true);
    ad::Graph g;
    // x*x + x -> d/dx = 2x + 1 = 7
    Tensor root = ad::add(ad::mul(x, x), x);
    auto grads = g.backward(root);
    CHECK(grads.at(x).value() == doctest::Approx(7.0));
}

TEST_CASE("relu subgradient at zero is zero") {
    Tensor x({3}, {-1.0, 0.0, 2.0}, true);
    ad::Graph g;
    Tensor root = ad::sum(ad::relu(x));
    auto grads = g.backward(root);
    CHECK(grads.at(x).at(0) == 0.0);
    CHECK(grads.at(x).at(1) == 0.0);
    CHECK(grads.at(x).at(2) == 1.0);
}

TEST_CASE("softmax is stable for large inputs and sums to one") {
    Tensor x({3}, {1000.0, 1001.0, 999.0});
    auto s = ad::softmax(x);
    double total = 0.0;
    for (std::size_t i = 0; i < 3; ++i) total += s.at(i);
    CHECK(total == doctest::Approx(1.0));
    CHECK(s.at(1) > s.at(0));
}

TEST_CASE("leaf untouched by the root still gets a zero gradient") {
    Tensor used = Tensor::scalar(1.0, true);
    Tensor unused({2}, {5.0, 6.0}, true);
    ad::Graph g;
    Tensor root = ad::square(used);
    Tensor side = ad::square(unused);  // traced but not part of the root
    (void)side;
    auto grads = g.backward(root);
    CHECK(grads.at(unused).at(0) == 0.0);
    CHECK(grads.at(used).value() == doctest::Approx(2.0));
}

TEST_CASE("randomized graphs match central finite differences") {
    Rng master = make_rng(20240801);
    int graphs = 0;
    while (graphs < 60) {
        auto prog = testing::make_random_program(master);
        auto leaves = testing::random_leaves(prog, master);
        ad::Graph g;
        Tensor root = prog.eval(leaves);
        auto grads = g.backward(root);
        for (std::size_t l = 0; l < leaves.size(); ++l) {
            const Tensor& gt = grads.at(leaves[l]);
            for (std::size_t e = 0; e < leaves[l].size(); ++e) {
                const double fd = testing::fd_program_grad(prog, leaves, l, e);
                CHECK(testing::rel_err(gt.at(e), fd) < 1e-5);
            }
        }
        ++graphs;
    }
}

TEST_CASE("gradients are deterministic across fresh graphs") {
    Rng master = make_rng(7);
    auto prog = testing::make_random_program(master);
    auto leaves = testing::random_leaves(prog, master);
    std::vector<double> first, second;
    for (int pass = 0; pass < 2; ++pass) {
        ad::Graph g;
        Tensor root = prog.eval(leaves);
        auto grads = g.backward(root);
        auto& out = pass == 0 ? first : second;
        for (const auto& leaf : leaves) {
            const Tensor& gt = grads.at(leaf);
            out.insert(out.end(), gt.data().begin(), gt.data().end());
        }
    }
    REQUIRE(first.size() == second.size());
    for (std::size_t i = 0; i < first.size(); ++i) CHECK(first[i] == second[i]);
}

TEST_CASE("rmsprop: zero gradient leaves parameters unchanged") {
    Tensor w({2}, {1.0, -2.0}, true);
    std::vector<Tensor> params{w};
    ad::Graph g;
    Tensor root = ad::mul(ad::sum(w), 0.0);
    auto grads = g.backward(root);
    std::vector<std::vector<double>> state;
    ad::rmsprop_step(params, grads, state, 0.1, 0.9, 1e-8);
    CHECK(w.at(0) == 1.0);
    CHECK(w.at(1) == -2.0);
}

TEST_CASE("rmsprop single-step arithmetic") {
    // state = 0.9*0 + 0.1*1 = 0.1; delta = -0.1/sqrt(0.1) = -0.31623
    Tensor w = Tensor::scalar(0.0, true);
    std::vector<Tensor> params{w};
    ad::Graph g;
    Tensor root = ad::sum(w);  // gradient 1
    auto grads = g.backward(root);
    std::vector<std::vector<double>> state;
    ad::rmsprop_step(params, grads, state, 0.1, 0.9, 1e-12);
    CHECK(state[0][0] == doctest::Approx(0.1));
    CHECK(w.value() == doctest::Approx(-0.1 / std::sqrt(0.1)).epsilon(1e-6));
}

TEST_CASE("rmsprop: repeated identical gradients approach a step of lr") {
    Tensor w = Tensor::scalar(0.0, true);
    std::vector<Tensor> params{w};
    std::vector<std::vector<double>> state;
    double prev = 0.0, delta = 0.0;
    for (int i = 0; i < 400; ++i) {
        ad::Graph g;
        Tensor root = ad::sum(w);
        auto grads = g.backward(root);
        prev = w.value();
        ad::rmsprop_step(params, grads, state, 0.05, 0.9, 1e-15);
        delta = std::abs(w.value() - prev);
    }
    CHECK(delta == doctest::Approx(0.05).epsilon(1e-6));
}

TEST_CASE("rmsprop scale consistency: doubling lr doubles the deltas") {
    auto run = [](double lr) {
        Tensor w({2}, {0.5, -0.25}, true);
        std::vector<Tensor> params{w};
        ad::Graph g;
        Tensor root = ad::sum(ad::square(w));
        auto grads = g.backward(root);
        std::vector<std::vector<double>> state;
        const std::vector<double> before(w.data().begin(), w.data().end());
        ad::rmsprop_step(params, grads, state, lr, 0.9, 1e-8);
        std::vector<double> delta(2);
        for (std::size_t i = 0; i < 2; ++i) delta[i] = w.at(i) - before[i];
        return delta;
    };
    auto d1 = run(0.01), d2 = run(0.02);
    for (std::size_t i = 0; i < 2; ++i) CHECK(d2[i] == doctest::Approx(2.0 * d1[i]));
}

TEST_CASE("rmsprop rejects a parameter missing from the gradient map") {
    Tensor w = Tensor::scalar(1.0, true);
    Tensor other = Tensor::scalar(2.0, true);
    std::vector<Tensor> params{w, other};
    ad::Graph g;
    Tensor root = ad::square(w);  // `other` never enters the graph
    auto grads = g.backward(root);
    std::vector<std::vector<double>> state;
    CHECK_THROWS_AS(ad::rmsprop_step(params, grads, state, 0.1, 0.9, 1e-8), Error);
}

TEST_CASE("exponential decay schedule") {
    CHECK(ad::exp_decay_lr(0.03, 0.9995, 0) == doctest::Approx(0.03));
    CHECK(ad::exp_decay_lr(0.03, 0.9995, 1) == doctest::Approx(0.029985));
    CHECK(ad::exp_decay_lr(0.42, 1.0, 1234) == doctest::Approx(0.42));
    CHECK_THROWS_AS(ad::exp_decay_lr(-1.0, 0.5, 1), Error);
    CHECK_THROWS_AS(ad::exp_decay_lr(1.0, 1.5, 1), Error);
}
