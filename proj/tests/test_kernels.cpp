#include <doctest.h>

#include "glim/kernels.hpp"
#include "test_support.hpp"

using namespace glim;
using namespace glim::kernels;
using glim::test::random_array;

TEST_SUITE_BEGIN("unit");

TEST_CASE("conv2d: 1x1 identity kernel maps input to itself") {
    Array x = Array::full({1, 3, 3}, 1.0);
    Array w({1, 1, 1, 1}, {1.0});
    auto d = ConvDims::conv(1, 3, 3, 1, 1, 1, 0);
    Array y({1, 3, 3});
    conv2d_forward(x.data(), w.data(), nullptr, y.data(), d);
    for (size_t i = 0; i < y.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv2d: all-ones 2x2 kernel sums the 2x2 input") {
    Array x({1, 2, 2}, {1, 2, 3, 4});
    Array w = Array::full({1, 1, 2, 2}, 1.0);
    auto d = ConvDims::conv(1, 2, 2, 1, 2, 1, 0);
    Array y({1, 1, 1});
    conv2d_forward(x.data(), w.data(), nullptr, y.data(), d);
    CHECK(y[0] == doctest::Approx(10.0));
}

TEST_CASE("conv2d: parallel kernel matches the serial reference") {
    rng::Engine gen(42);
    for (int trial = 0; trial < 8; ++trial) {
        const int ci = 1 + static_cast<int>(rng::uniform_int(gen, 0, 3));
        const int co = 1 + static_cast<int>(rng::uniform_int(gen, 0, 3));
        const int h = 5 + static_cast<int>(rng::uniform_int(gen, 0, 7));
        const int w = 5 + static_cast<int>(rng::uniform_int(gen, 0, 7));
        const int k = 1 + 2 * static_cast<int>(rng::uniform_int(gen, 0, 1));  // 1 or 3
        const int stride = 1 + static_cast<int>(rng::uniform_int(gen, 0, 1));
        const int pad = static_cast<int>(rng::uniform_int(gen, 0, 1));
        if (h + 2 * pad < k || w + 2 * pad < k) continue;
        Array x = random_array({ci, h, w}, gen);
        Array wt = random_array({co, ci, k, k}, gen);
        Array b = random_array({co}, gen);
        auto d = ConvDims::conv(ci, h, w, co, k, stride, pad);
        Array fast({co, d.ho, d.wo}), ref({co, d.ho, d.wo});
        conv2d_forward(x.data(), wt.data(), b.data(), fast.data(), d);
        reference::conv2d_forward(x.data(), wt.data(), b.data(), ref.data(), d);
        for (size_t i = 0; i < fast.size(); ++i)
            CHECK(glim::test::close_rel(fast[i], ref[i], 1e-6));
    }
}

TEST_CASE("conv2d: channel mismatch raises a dimension error") {
    Tape t;
    Var x = t.leaf(Array({2, 4, 4}));
    Var w = t.leaf(Array({1, 3, 3, 3}));
    CHECK_THROWS_AS(conv2d(t, x, w, Var{}, 1, 1), DimensionError);
}

TEST_CASE("deconv2d: 1x1 identity kernel, stride 1, pad 0") {
    Array x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Array w({1, 1, 1, 1}, {1.0});
    auto d = ConvDims::deconv(1, 3, 3, 1, 1, 1, 0);
    Array y({1, d.ho, d.wo});
    deconv2d_forward(x.data(), w.data(), nullptr, y.data(), d);
    REQUIRE(d.ho == 3);
    for (size_t i = 0; i < y.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("deconv2d: zero input gives zero output") {
    rng::Engine gen(7);
    Array x({2, 4, 4});
    Array w = random_array({2, 3, 4, 4}, gen);
    auto d = ConvDims::deconv(2, 4, 4, 3, 4, 2, 1);
    Array y({3, d.ho, d.wo});
    deconv2d_forward(x.data(), w.data(), nullptr, y.data(), d);
    for (size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.0);
}

TEST_CASE("deconv2d matches the serial reference") {
    rng::Engine gen(11);
    for (int trial = 0; trial < 6; ++trial) {
        const int a = 1 + static_cast<int>(rng::uniform_int(gen, 0, 2));
        const int b = 1 + static_cast<int>(rng::uniform_int(gen, 0, 2));
        const int h = 3 + static_cast<int>(rng::uniform_int(gen, 0, 4));
        const int stride = 1 + static_cast<int>(rng::uniform_int(gen, 0, 1));
        const int k = stride == 2 ? 4 : 3;
        const int pad = 1;
        Array x = random_array({a, h, h}, gen);
        Array wt = random_array({a, b, k, k}, gen);
        Array bias = random_array({b}, gen);
        auto d = ConvDims::deconv(a, h, h, b, k, stride, pad);
        Array fast({b, d.ho, d.wo}), ref({b, d.ho, d.wo});
        deconv2d_forward(x.data(), wt.data(), bias.data(), fast.data(), d);
        reference::deconv2d_forward(x.data(), wt.data(), bias.data(), ref.data(), d);
        for (size_t i = 0; i < fast.size(); ++i)
            CHECK(glim::test::close_rel(fast[i], ref[i], 1e-6));
    }
}

// <conv2d(x,w), y> == <x, deconv2d(y,w)>: deconv with the same kernel is
// the exact adjoint of conv.
TEST_CASE("conv/deconv transpose identity on random instances") {
    rng::Engine gen(123);
    for (int trial = 0; trial < 10; ++trial) {
        const int ci = 1 + static_cast<int>(rng::uniform_int(gen, 0, 2));
        const int co = 1 + static_cast<int>(rng::uniform_int(gen, 0, 2));
        const int k = 3;
        const int stride = 1 + static_cast<int>(rng::uniform_int(gen, 0, 1));
        const int pad = static_cast<int>(rng::uniform_int(gen, 0, 1));
        int h = 4 + static_cast<int>(rng::uniform_int(gen, 0, 5));
        h -= (h + 2 * pad - k) % stride;  // keep conv/deconv shapes exact inverses
        if (h + 2 * pad < k) continue;
        Array x = random_array({ci, h, h}, gen);
        Array w = random_array({co, ci, k, k}, gen);
        auto d = ConvDims::conv(ci, h, h, co, k, stride, pad);
        Array cy({co, d.ho, d.wo});
        conv2d_forward(x.data(), w.data(), nullptr, cy.data(), d);
        Array y = random_array({co, d.ho, d.wo}, gen);
        auto dd = ConvDims::deconv(co, d.ho, d.wo, ci, k, stride, pad);
        REQUIRE(dd.ho == h);
        Array dy({ci, h, h});
        deconv2d_forward(y.data(), w.data(), nullptr, dy.data(), dd);
        Real lhs = 0, rhs = 0;
        for (size_t i = 0; i < cy.size(); ++i) lhs += cy[i] * y[i];
        for (size_t i = 0; i < x.size(); ++i) rhs += x[i] * dy[i];
        CHECK(glim::test::close_rel(lhs, rhs, 1e-6));
    }
}

// deconv2d(v, k) equals the gradient of <conv2d(x, k), v> with respect to x.
TEST_CASE("deconv2d equals conv2d input gradient") {
    rng::Engine gen(99);
    const int ci = 2, co = 3, h = 6, k = 3, stride = 1, pad = 1;
    Array x = random_array({ci, h, h}, gen);
    Array w = random_array({co, ci, k, k}, gen);
    auto d = ConvDims::conv(ci, h, h, co, k, stride, pad);
    Array v = random_array({co, d.ho, d.wo}, gen);

    Tape t;
    Var xv = t.leaf(x, true);
    Var wv = t.leaf(w, false);
    Var y = conv2d(t, xv, wv, Var{}, stride, pad);
    Var ip = sum(t, mul_const(t, y, v));
    t.backward(ip);
    const Array& gx = t.grad(xv);

    auto dd = ConvDims::deconv(co, d.ho, d.wo, ci, k, stride, pad);
    Array dv({ci, h, h});
    deconv2d_forward(v.data(), w.data(), nullptr, dv.data(), dd);
    for (size_t i = 0; i < gx.size(); ++i)
        CHECK(glim::test::close_rel(gx[i], dv[i], 1e-6));
}

TEST_SUITE_END();
