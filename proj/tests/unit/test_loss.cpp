#include "doctest.h"

#include <cmath>

#include "jh/loss.hpp"
#include "jh/ops.hpp"
#include "../support/oracles.hpp"

using namespace jh;

namespace {

Tensor px(float v) { return Tensor({1, 1, 1, 1, 1}, {v}); }

}  // namespace

TEST_SUITE("loss") {
    TEST_CASE("worked single-pixel values") {
        CHECK(neg_log_eps(Tensor({1}, {0.0f}), 0.001f).item() == doctest::Approx(6.907755).epsilon(1e-6));
        // delta^2 = 1 with J = 0
        CHECK(dual_loss(px(1.0f), px(0.0f), px(0.0f)).total.item() == doctest::Approx(6.907755).epsilon(1e-6));
        // delta = 0, J = 0.5: pure mask cost
        CHECK(dual_loss(px(2.0f), px(0.5f), px(2.0f)).total.item() == doctest::Approx(0.5).epsilon(1e-6));
        // delta^2 = 4, J = 0.999: ln(1) = 0
        CHECK(std::abs(dual_loss(px(2.0f), px(0.999f), px(0.0f)).total.item() - 0.999) <= 1e-5);
        CHECK(bce_loss(Tensor({1}, {0.5f}), Tensor({1}, {1.0f})).item() == doctest::Approx(0.693147).epsilon(1e-6));
        CHECK(bce_loss(Tensor({2}, {0.0f, 1.0f}), Tensor({2}, {0.0f, 1.0f})).item() == doctest::Approx(0.0));
    }

    TEST_CASE("frame differential") {
        const auto d = frame_differential(Tensor({1, 1, 2, 1, 1}, {3.0f, 5.0f}), Tensor({1, 1, 1, 1, 1}, {2.0f}));
        CHECK(std::vector<float>(d.data().begin(), d.data().end()) == std::vector<float>{1.0f, 3.0f});
        Rng rng(41);
        const auto x = oracle::random_tensor(rng, {2, 1, 3, 4, 5});
        const auto h = oracle::random_tensor(rng, {2, 1, 1, 4, 5});
        const auto r = frame_differential(x, h);
        for (std::int64_t k = 0; k < 2; ++k)
            for (std::int64_t n = 0; n < 3; ++n)
                for (std::int64_t p = 0; p < 20; ++p)
                    CHECK(r.data()[(k * 3 + n) * 20 + p] == x.data()[(k * 3 + n) * 20 + p] - h.data()[k * 20 + p]);
        CHECK_THROWS(frame_differential(x, oracle::random_tensor(rng, {2, 1, 1, 4, 4})));
    }

    TEST_CASE("optimal mask against the grid search") {
        CHECK(optimal_mask(0.0, 1.0) == 0.0);
        CHECK(optimal_mask(1.0, 1.0, 0.001) == doctest::Approx(0.999));
        CHECK(optimal_mask(5.0, 1.0) == 1.0);
        CHECK(oracle::grid_search_mask(1.0, 1.0, 0.001) == doctest::Approx(0.999).epsilon(1e-4));
        Rng rng(42);
        for (int i = 0; i < 200; ++i) {
            const double d2 = rng.uniform(0.0, 10.0), a = rng.uniform(0.1, 5.0), e = rng.uniform(1e-4, 0.05);
            CHECK(std::abs(optimal_mask(d2, a, e) - oracle::grid_search_mask(d2, a, e)) <= 1e-3);
        }
        CHECK_THROWS(optimal_mask(1.0, 0.0));
    }

    TEST_CASE("dual loss equals the straight-line chain") {
        Rng rng(43);
        for (int i = 0; i < 20; ++i) {
            const Shape s{oracle::pick(rng, 1, 3), 1, oracle::pick(rng, 1, 5), oracle::pick(rng, 1, 6), oracle::pick(rng, 1, 6)};
            Shape bs = s;
            bs[2] = 1;
            const auto x = oracle::random_tensor(rng, s, -2, 2);
            const auto j = oracle::random_tensor(rng, s, 0, 1);
            const auto h = oracle::random_tensor(rng, bs, -2, 2);
            const double a = rng.uniform(0.1, 3), e = rng.uniform(1e-3, 0.01);
            const double ref = oracle::dual_loss({x.data().begin(), x.data().end()}, {j.data().begin(), j.data().end()},
                                                 {h.data().begin(), h.data().end()}, s, a, e);
            CHECK(std::abs(dual_loss_total(x, j, h, a, e).item() - ref) <= 1e-12);
            const auto lf = dual_loss(x.cast<float>(), j.cast<float>(), h.cast<float>(), a, e);
            CHECK(std::abs(lf.total.item() - ref) <= 1e-5 * std::max(1.0, std::abs(ref)));
            CHECK(lf.total.item() == doctest::Approx(lf.background_term.item() + lf.mask_cost.item()));
        }
    }

    TEST_CASE("monotone in squared error while J <= 1 - eps") {
        Rng rng(44);
        const Shape s{1, 1, 2, 3, 3};
        const auto j = oracle::random_tensor(rng, s, 0.0, 0.999);
        const auto h = Tensor64::zeros({1, 1, 1, 3, 3});
        auto x = oracle::random_tensor(rng, s, 0.0, 1.0);
        double prev = dual_loss_total(x, j, h, 1.0, 1e-3).item();
        for (int step = 0; step < 30; ++step) {
            x.mutable_data()[static_cast<std::size_t>(rng.below(18))] += 0.1;
            const double cur = dual_loss_total(x, j, h, 1.0, 1e-3).item();
            CHECK(cur >= prev);
            prev = cur;
        }
    }

    TEST_CASE("above 1 - eps the coefficient turns negative") {
        // -ln(1 + 0.001) < 0, so a larger error lowers the loss there.
        const auto a = dual_loss(px(1.0f), px(1.0f), px(0.0f)).total.item();
        const auto b = dual_loss(px(2.0f), px(1.0f), px(0.0f)).total.item();
        CHECK(b < a);
    }

    TEST_CASE("alpha = 0 leaves only the masked error") {
        Rng rng(45);
        const auto x = oracle::random_tensor(rng, {1, 1, 2, 2, 2});
        const auto j = oracle::random_tensor(rng, {1, 1, 2, 2, 2}, 0, 1);
        const auto h = oracle::random_tensor(rng, {1, 1, 1, 2, 2});
        const auto l = dual_loss(x.cast<float>(), j.cast<float>(), h.cast<float>(), 0.0, 1e-3);
        CHECK(l.mask_cost.item() == 0.0f);
        CHECK(l.total.item() == l.background_term.item());
    }

    TEST_CASE("bce against the formula oracle") {
        Rng rng(46);
        for (int i = 0; i < 20; ++i) {
            const Shape s{oracle::pick(rng, 1, 50)};
            auto p = oracle::random_tensor(rng, s, 0, 1);
            auto y = oracle::random_tensor(rng, s, 0, 1);
            for (auto& v : y.mutable_data()) v = v < 0.3 ? 1.0 : 0.0;
            const double ref = oracle::bce({p.data().begin(), p.data().end()}, {y.data().begin(), y.data().end()});
            CHECK(std::abs(bce_loss(p, y).item() - ref) <= 1e-12);
        }
    }

    TEST_CASE("invalid inputs") {
        CHECK_THROWS_AS(dual_loss(px(0.0f), px(1.5f), px(0.0f)), std::domain_error);
        CHECK_THROWS_AS(dual_loss(px(0.0f), Tensor::zeros({1, 1, 2, 1, 1}), px(0.0f)), std::invalid_argument);
        CHECK_THROWS_AS(bce_loss(Tensor({1}, {0.5f}), Tensor({1}, {0.5f})), std::domain_error);
    }
}
