#include "doctest.h"

#include <cmath>

#include "jh/ops.hpp"
#include "jh/tensor.hpp"

using namespace jh;

TEST_SUITE("tensor") {
    TEST_CASE("construction checks the data length") {
        CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>(5)), std::invalid_argument);
        auto t = Tensor::full({2, 3}, 1.5f);
        CHECK(t.numel() == 6);
        CHECK(t.dim(1) == 3);
        CHECK(t.data()[5] == 1.5f);
        CHECK_THROWS_AS(t.dim(2), std::out_of_range);
        CHECK(Tensor::scalar(2.0f).item() == 2.0f);
        CHECK(shape_str({1, 2, 3}) == "[1,2,3]");
    }

    TEST_CASE("item needs exactly one element") {
        CHECK_THROWS_AS(Tensor::zeros({2}).item(), std::invalid_argument);
    }

    TEST_CASE("backward accumulates through shared subexpressions") {
        // f = mean((a*a) + a) with a used twice: df/da = (2a + 1) / n
        Tensor64 a({3}, {1.0, -2.0, 0.5}, true);
        auto f = mean_all(add(square(a), a));
        backward(f);
        REQUIRE(a.has_grad());
        CHECK(a.grad()[0] == doctest::Approx(3.0 / 3));
        CHECK(a.grad()[1] == doctest::Approx(-3.0 / 3));
        CHECK(a.grad()[2] == doctest::Approx(2.0 / 3));
    }

    TEST_CASE("graph is consumed and intermediates keep no gradient") {
        Tensor64 a({2}, {1.0, 2.0}, true);
        auto mid = square(a);
        auto f = mean_all(mid);
        backward(f);
        CHECK_FALSE(mid.has_grad());
        CHECK(mid.is_leaf());
        CHECK(f.grad()[0] == 1.0);
    }

    TEST_CASE("no-grad guard records nothing") {
        Tensor a({2}, {1.0f, 2.0f}, true);
        {
            NoGradGuard g;
            auto f = mean_all(a);
            CHECK_FALSE(f.requires_grad());
            CHECK_THROWS_AS(backward(f), std::logic_error);
        }
        CHECK(grad_enabled());
        CHECK(mean_all(a).requires_grad());
    }

    TEST_CASE("backward rejects non-scalars") {
        Tensor a({2}, {1.0f, 2.0f}, true);
        CHECK_THROWS_AS(backward(square(a)), std::invalid_argument);
    }

    TEST_CASE("finite checks flag NaN production") {
        set_finite_checks(true);
        Tensor a({1}, {-1.0f});
        CHECK_THROWS_AS(neg_log_eps(a, 0.5f), std::domain_error);
        Tensor big({1}, {3e38f});
        CHECK_THROWS_AS(square(big), std::domain_error);
        set_finite_checks(false);
        CHECK(std::isinf(square(big).data()[0]));
    }

    TEST_CASE("detach and cast drop the graph") {
        Tensor64 a({2}, {1.0, 2.0}, true);
        auto s = square(a);
        CHECK(s.detach().is_leaf());
        CHECK_FALSE(s.detach().requires_grad());
        auto f = a.cast<float>();
        CHECK(f.data()[1] == 2.0f);
    }

    TEST_CASE("set_requires_grad only on leaves") {
        Tensor64 a({1}, {1.0}, true);
        auto s = square(a);
        CHECK_THROWS_AS(s.set_requires_grad(false), std::logic_error);
    }
}
