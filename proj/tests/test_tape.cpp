#include <doctest.h>

#include <cmath>

#include "glim/adam.hpp"
#include "glim/sampling.hpp"
#include "glim/tape.hpp"
#include "test_support.hpp"

using namespace glim;
using glim::test::grad_check;
using glim::test::random_array;

TEST_SUITE_BEGIN("unit");

TEST_CASE("backward: d(x^2)/dx at x=3 is 6") {
    Tape t;
    Var x = t.leaf(Array::scalar(3.0), true);
    Var y = square(t, x);
    t.backward(y);
    CHECK(t.grad(x)[0] == doctest::Approx(6.0));
}

TEST_CASE("backward rejects non-scalar losses") {
    Tape t;
    Var x = t.leaf(Array({2}, {1.0, 2.0}), true);
    Var y = square(t, x);
    CHECK_THROWS_AS(t.backward(y), ContractError);
}

TEST_CASE("backward twice on one tape is an error") {
    Tape t;
    Var x = t.leaf(Array::scalar(2.0), true);
    Var y = square(t, x);
    t.backward(y);
    CHECK_THROWS_AS(t.backward(y), ContractError);
}

TEST_CASE("parameter off the loss path keeps an exactly zero gradient") {
    Tape t;
    Var x = t.leaf(Array::scalar(3.0), true);
    Var unused = t.leaf(Array({2, 2}), true);
    Var y = square(t, x);
    t.backward(y);
    const Array& g = t.grad(unused);
    for (size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("validation mode raises on non-finite values") {
    Tape t;
    Var x = t.leaf(Array::scalar(1e308), true);
    Tape::set_validation(false);
    CHECK_NOTHROW(square(t, x));  // silently overflows when validation is off
    Tape::set_validation(true);
    CHECK_THROWS_AS(square(t, x), NumericError);
    Tape::set_validation(false);
}

TEST_CASE("forward passes are bit-identical across repeated runs") {
    rng::Engine gen(5);
    Array x = random_array({3, 8, 8}, gen);
    Array w = random_array({4, 3, 3, 3}, gen);
    Array b = random_array({4}, gen);
    auto run = [&] {
        Tape t;
        Var y = conv2d(t, t.leaf(x), t.leaf(w), t.leaf(b), 1, 1);
        Var z = leaky_relu(t, y);
        return t.val(z);
    };
    Array r1 = run(), r2 = run();
    for (size_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r2[i]);
}

TEST_CASE("finite differences confirm every layer type") {
    rng::Engine gen(2024);
    // conv2d over weights, bias and input
    {
        ParamMap pm;
        pm["x"] = random_array({2, 6, 6}, gen);
        pm["w"] = random_array({3, 2, 3, 3}, gen);
        pm["b"] = random_array({3}, gen);
        auto r = grad_check(
            [](Tape& t, const TapedParams& tp) {
                Var y = conv2d(t, tp("x"), tp("w"), tp("b"), 1, 1);
                return mean(t, square(t, y));
            },
            pm);
        CHECK(r.worst_rel < 1e-4);
    }
    // strided conv
    {
        ParamMap pm;
        pm["x"] = random_array({2, 8, 8}, gen);
        pm["w"] = random_array({2, 2, 3, 3}, gen);
        auto r = grad_check(
            [](Tape& t, const TapedParams& tp) {
                Var y = conv2d(t, tp("x"), tp("w"), Var{}, 2, 1);
                return mean(t, square(t, y));
            },
            pm);
        CHECK(r.worst_rel < 1e-4);
    }
    // deconv2d (strided upsample)
    {
        ParamMap pm;
        pm["x"] = random_array({2, 4, 4}, gen);
        pm["w"] = random_array({2, 3, 4, 4}, gen);
        pm["b"] = random_array({3}, gen);
        auto r = grad_check(
            [](Tape& t, const TapedParams& tp) {
                Var y = deconv2d(t, tp("x"), tp("w"), tp("b"), 2, 1);
                return mean(t, square(t, y));
            },
            pm);
        CHECK(r.worst_rel < 1e-4);
    }
    // leaky_relu, add, mul, concat, pool, linear, log_softmax
    {
        ParamMap pm;
        pm["a"] = random_array({2, 5, 5}, gen);
        pm["b"] = random_array({2, 5, 5}, gen);
        pm["w"] = random_array({3, 4}, gen);
        pm["bb"] = random_array({3}, gen);
        auto r = grad_check(
            [](Tape& t, const TapedParams& tp) {
                Var c = concat_ch(t, leaky_relu(t, tp("a")), mul(t, tp("a"), tp("b")));
                Var p = global_avg_pool(t, c);
                Var l = linear(t, p, tp("w"), tp("bb"));
                Var ls = log_softmax(t, l);
                return scale(t, gather1(t, ls, 1), -1.0);
            },
            pm);
        CHECK(r.worst_rel < 1e-4);
    }
    // masked squared error and masked abs mean
    {
        ParamMap pm;
        pm["x"] = random_array({3, 4, 4}, gen);
        Array target = random_array({3, 4, 4}, gen);
        Array mask({1, 4, 4});
        for (int i = 0; i < 16; ++i) mask[static_cast<size_t>(i)] = i % 3 == 0 ? 1.0 : 0.0;
        auto r = grad_check(
            [&](Tape& t, const TapedParams& tp) {
                Var e = masked_sq_err(t, tp("x"), target, mask);
                Var a = abs_mean(t, tp("x"), &mask);
                return add(t, e, a);
            },
            pm);
        CHECK(r.worst_rel < 1e-4);
    }
    // exp, clamp, minimum, sub_const, mul_const (the PPO surrogate pieces)
    {
        ParamMap pm;
        pm["x"] = random_array({6}, gen, -0.4, 0.4);
        Array old = random_array({6}, gen, -0.4, 0.4);
        Array adv = random_array({6}, gen);
        auto r = grad_check(
            [&](Tape& t, const TapedParams& tp) {
                Var ratio = exp_op(t, sub_const(t, tp("x"), old));
                Var s1 = mul_const(t, ratio, adv);
                Var s2 = mul_const(t, clamp(t, ratio, 0.8, 1.2), adv);
                return scale(t, mean(t, minimum(t, s1, s2)), -1.0);
            },
            pm);
        CHECK(r.worst_rel < 1e-4);
    }
}

TEST_CASE("adam: first step moves parameters by about the learning rate") {
    ParamMap pm;
    pm["p"] = Array({3}, {1.0, -2.0, 0.5});
    std::map<std::string, Array> g;
    g["p"] = Array({3}, {0.3, -4.0, 1e-3});
    Adam opt(0.05);
    ParamMap before = pm;
    opt.step(pm, g);
    for (size_t i = 0; i < 3; ++i) {
        const double moved = std::abs(pm["p"][i] - before["p"][i]);
        CHECK(moved == doctest::Approx(0.05).epsilon(0.01));
        CHECK((pm["p"][i] < before["p"][i]) == (g["p"][i] > 0));
    }
    CHECK(opt.steps_taken() == 1);
}

TEST_CASE("adam: 200 steps on a quadratic reach the minimum region") {
    ParamMap pm;
    pm["x"] = Array::scalar(0.0);
    Adam opt(0.1);
    for (int i = 0; i < 200; ++i) {
        std::map<std::string, Array> g;
        g["x"] = Array::scalar(2.0 * (pm["x"][0] - 5.0));
        opt.step(pm, g);
    }
    CHECK(std::abs(pm["x"][0] - 5.0) < 0.5);
}

TEST_CASE("adam: zero gradient on a fresh state leaves parameters unchanged") {
    ParamMap pm;
    pm["x"] = Array({2}, {1.5, -3.0});
    std::map<std::string, Array> g;
    g["x"] = Array({2});
    Adam opt(0.1);
    opt.step(pm, g);
    CHECK(pm["x"][0] == 1.5);
    CHECK(pm["x"][1] == -3.0);
}

TEST_CASE("softmax_flat: uniform logits give uniform probabilities") {
    Array logits = Array::full({4, 4}, 0.7);
    Array p = softmax_flat(logits);
    Real total = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        CHECK(p[i] == doctest::Approx(1.0 / 16).epsilon(1e-12));
        total += p[i];
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
}

TEST_CASE("softmax_flat: a dominant logit takes almost all mass") {
    Array logits({3, 3});
    logits[4] = 50.0;
    Array p = softmax_flat(logits);
    CHECK(p[4] > 1.0 - 1e-9);
}

TEST_CASE("categorical_sample: empirical frequencies match probabilities") {
    Array logits({3, 3}, {0.1, 1.0, -0.5, 2.0, 0.0, 0.3, -1.0, 0.7, 0.2});
    Array p = softmax_flat(logits);
    rng::Engine gen(31337);
    std::vector<int> counts(9, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        auto [r, c] = categorical_sample(p, gen);
        counts[static_cast<size_t>(r * 3 + c)]++;
    }
    for (size_t i = 0; i < 9; ++i) {
        const double freq = static_cast<double>(counts[i]) / n;
        CHECK(std::abs(freq - p[i]) < 0.01);
    }
}

TEST_SUITE_END();
