#include "doctest.h"

#include <cmath>

#include "jh/ops.hpp"
#include "../support/oracles.hpp"

using namespace jh;

namespace {

double max_abs_diff(std::span<const double> a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

std::vector<double> vec(const Tensor64& t) { return {t.data().begin(), t.data().end()}; }

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST_SUITE("conv") {
    TEST_CASE("conv3d matches the direct loop oracle") {
        Rng rng(11);
        for (int trial = 0; trial < 40; ++trial) {
            const Extent3 k{oracle::pick(rng, 1, 3), oracle::pick(rng, 1, 3), oracle::pick(rng, 1, 3)};
            ConvGeometry g;
            for (int a = 0; a < 3; ++a) {
                g.stride[a] = oracle::pick(rng, 1, 2);
                g.padding[a] = oracle::pick(rng, 0, k[a] - 1);
            }
            const auto cin = oracle::pick(rng, 1, 4), cout = oracle::pick(rng, 1, 4);
            Shape xs{oracle::pick(rng, 1, 3), cin, k[0] + oracle::pick(rng, 0, 4), k[1] + oracle::pick(rng, 0, 4),
                     k[2] + oracle::pick(rng, 0, 4)};
            auto x = oracle::random_tensor(rng, xs);
            auto w = oracle::random_tensor(rng, {cout, cin, k[0], k[1], k[2]});
            auto b = oracle::random_tensor(rng, {cout});
            Shape os;
            const auto ref = oracle::conv3d(vec(x), xs, vec(w), w.shape(), vec(b), g, os);
            const auto y = conv3d(x, w, b, g);
            REQUIRE(y.shape() == os);
            CHECK(max_abs_diff(y.data(), ref) < 1e-12);
        }
    }

    TEST_CASE("conv_transpose3d matches the scatter oracle") {
        Rng rng(12);
        for (int trial = 0; trial < 40; ++trial) {
            const Extent3 k{oracle::pick(rng, 1, 3), oracle::pick(rng, 1, 3), oracle::pick(rng, 1, 3)};
            ConvGeometry g;
            for (int a = 0; a < 3; ++a) {
                g.stride[a] = oracle::pick(rng, 1, 2);
                g.padding[a] = oracle::pick(rng, 0, (k[a] - 1) / 2);
            }
            const auto cin = oracle::pick(rng, 1, 4), cout = oracle::pick(rng, 1, 4);
            Shape xs{oracle::pick(rng, 1, 3), cin, oracle::pick(rng, 1, 4), oracle::pick(rng, 1, 4),
                     oracle::pick(rng, 1, 4)};
            auto x = oracle::random_tensor(rng, xs);
            auto w = oracle::random_tensor(rng, {cin, cout, k[0], k[1], k[2]});
            auto b = oracle::random_tensor(rng, {cout});
            Shape os;
            const auto ref = oracle::conv_transpose3d(vec(x), xs, vec(w), w.shape(), vec(b), g, os);
            const auto y = conv_transpose3d(x, w, b, g);
            REQUIRE(y.shape() == os);
            CHECK(max_abs_diff(y.data(), ref) < 1e-12);
        }
    }

    TEST_CASE("transpose is the adjoint of conv") {
        // <conv(x), y> == <x, conv_T(y)> with zero biases and the same weight tensor.
        Rng rng(13);
        for (int trial = 0; trial < 20; ++trial) {
            const auto cin = oracle::pick(rng, 1, 3), cout = oracle::pick(rng, 1, 3);
            ConvGeometry g{{1, oracle::pick(rng, 1, 2), 1}, {1, 1, 1}};
            Shape xs{1, cin, 4, 6, 5};
            auto x = oracle::random_tensor(rng, xs);
            auto w = oracle::random_tensor(rng, {cout, cin, 3, 3, 3});
            auto y = conv3d(x, w, Tensor64::zeros({cout}), g);
            auto r = oracle::random_tensor(rng, y.shape());
            // conv_transpose3d reads weight as [in=cout, out=cin]; same memory layout.
            auto xt = conv_transpose3d(r, w, Tensor64::zeros({cin}), g);
            if (xt.shape() != xs) continue;  // stride 2 can lose a trailing row
            CHECK(dot(y.data(), r.data()) == doctest::Approx(dot(x.data(), xt.data())).epsilon(1e-12));
        }
    }

    TEST_CASE("conv3d is linear in its input") {
        Rng rng(14);
        Shape xs{2, 2, 3, 5, 5};
        auto a = oracle::random_tensor(rng, xs), b = oracle::random_tensor(rng, xs);
        auto w = oracle::random_tensor(rng, {3, 2, 3, 3, 3});
        auto zero = Tensor64::zeros({3});
        ConvGeometry g{{1, 1, 1}, {1, 1, 1}};
        auto lhs = conv3d(add(scale(a, 2.0), scale(b, -0.5)), w, zero, g);
        auto rhs = add(scale(conv3d(a, w, zero, g), 2.0), scale(conv3d(b, w, zero, g), -0.5));
        CHECK(max_abs_diff(lhs.data(), vec(rhs)) < 1e-12);
    }

    TEST_CASE("output extents") {
        CHECK(conv_output_extent({16, 64, 64}, {3, 3, 3}, {{1, 1, 1}, {1, 1, 1}}) == Extent3{16, 64, 64});
        CHECK(conv_output_extent({5, 7, 9}, {3, 3, 3}, {{2, 2, 2}, {0, 0, 0}}) == Extent3{2, 3, 4});
        CHECK(conv_transpose_output_extent({2, 3, 4}, {3, 3, 3}, {{2, 2, 2}, {0, 0, 0}}) == Extent3{5, 7, 9});
    }

    TEST_CASE("channel mismatch is rejected") {
        auto x = Tensor::zeros({1, 2, 3, 3, 3});
        CHECK_THROWS_AS(conv3d(x, Tensor::zeros({1, 3, 1, 1, 1}), Tensor::zeros({1})), std::invalid_argument);
        CHECK_THROWS_AS(conv_transpose3d(x, Tensor::zeros({3, 1, 1, 1, 1}), Tensor::zeros({1})),
                        std::invalid_argument);
    }
}
