#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "jh/hourglass.hpp"
#include "jh/random.hpp"
#include "../support/oracles.hpp"

using namespace jh;

namespace {

Tensor random_input(std::uint64_t seed, Shape shape) {
    Rng rng(seed);
    std::vector<float> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return Tensor(std::move(shape), std::move(v));
}

// Hand count for depth 2, base 8, 3x3x3 kernels:
//   encoder: 1->8, 8->16; decoder: 32->8, 16->8; projection 8->1.
std::int64_t hand_count() {
    const std::int64_t k = 27;
    return (1 * 8 * k + 8) + (8 * 16 * k + 16) + (32 * 8 * k + 8) + (16 * 8 * k + 8) + (8 + 1);
}

}  // namespace

TEST_SUITE("hourglass") {
    TEST_CASE("parameter count matches the closed form and the hand count") {
        HourglassConfig c;
        const auto m = build_hourglass(c, Head::Sigmoid, 1);
        CHECK(hand_count() == 14089);
        CHECK(parameter_count(c) == hand_count());
        CHECK(m.parameter_count() == hand_count());
        for (int depth = 1; depth <= 3; ++depth) {
            HourglassConfig d;
            d.depth = depth;
            d.base_channels = 4;
            CHECK(build_hourglass(d, Head::FrameMean, 1).parameter_count() == parameter_count(d));
        }
    }

    TEST_CASE("shapes and output ranges") {
        HourglassConfig c;
        const auto j = build_hourglass(c, Head::Sigmoid, 3);
        const auto h = build_hourglass(c, Head::FrameMean, 4);
        const auto x = random_input(1, {2, 1, 16, 64, 64});
        NoGradGuard g;
        const auto y = forward_jekyll(j, x);
        CHECK(y.shape() == x.shape());
        for (float v : y.data()) REQUIRE((v > 0.0f && v < 1.0f));
        CHECK(forward_hyde(h, x).shape() == Shape{2, 1, 1, 64, 64});
        CHECK_THROWS_AS(forward_hyde(j, x), std::invalid_argument);
        CHECK_THROWS_AS(forward_jekyll(h, x), std::invalid_argument);
    }

    TEST_CASE("determinism") {
        HourglassConfig c;
        c.input_width = c.input_height = 16;
        const auto a = build_hourglass(c, Head::Sigmoid, 9), b = build_hourglass(c, Head::Sigmoid, 9);
        for (std::size_t i = 0; i < a.params.size(); ++i)
            CHECK(std::equal(a.params[i].data().begin(), a.params[i].data().end(), b.params[i].data().begin()));
        const auto x = random_input(2, {1, 1, 4, 16, 16});
        const auto ya = forward_jekyll(a, x), yb = forward_jekyll(a, x);
        CHECK(std::equal(ya.data().begin(), ya.data().end(), yb.data().begin()));
        const auto other = build_hourglass(c, Head::Sigmoid, 10);
        CHECK_FALSE(std::equal(a.params[0].data().begin(), a.params[0].data().end(), other.params[0].data().begin()));
    }

    TEST_CASE("zeroed projection gives a uniform 0.5") {
        HourglassConfig c;
        c.input_width = c.input_height = 16;
        auto m = build_hourglass(c, Head::Sigmoid, 5);
        for (std::size_t i = 0; i < m.params.size(); ++i)
            if (m.names[i].rfind("project", 0) == 0)
                for (auto& v : m.params[i].mutable_data()) v = 0.0f;
        const auto y = forward_jekyll(m, random_input(3, {1, 1, 4, 16, 16}));
        for (float v : y.data()) REQUIRE(v == 0.5f);
    }

    TEST_CASE("frame-mean head equals the mean of the captured last layer") {
        HourglassConfig c;
        c.input_width = c.input_height = 16;
        const auto m = build_hourglass(c, Head::FrameMean, 6);
        const auto x = random_input(4, {2, 1, 5, 16, 16});
        const auto tr = forward_trace(m, x);
        REQUIRE(tr.last_layer.shape() == Shape{2, 1, 5, 16, 16});
        for (std::int64_t k = 0; k < 2; ++k)
            for (std::int64_t p = 0; p < 16 * 16; ++p) {
                double s = 0.0;
                for (std::int64_t n = 0; n < 5; ++n) s += tr.last_layer.data()[static_cast<std::size_t>((k * 5 + n) * 256 + p)];
                CHECK(std::abs(tr.output.data()[static_cast<std::size_t>(k * 256 + p)] - s / 5.0) <= 1e-6);
            }
    }

    TEST_CASE("constant-over-time last layer makes Hyde return that slice") {
        HourglassConfig c;
        c.input_width = c.input_height = 16;
        // Time padding breaks time invariance at the edges, so use time kernels of 1.
        HourglassConfig flat = c;
        flat.stages = {StageGeometry{{1, 3, 3}, {0, 1, 1}, {1, 1, 1}}, StageGeometry{{1, 3, 3}, {0, 1, 1}, {1, 1, 1}}};
        const auto mf = build_hourglass(flat, Head::FrameMean, 8);
        auto frame = random_input(5, {1, 1, 1, 16, 16});
        std::vector<float> rep;
        for (int n = 0; n < 4; ++n) rep.insert(rep.end(), frame.data().begin(), frame.data().end());
        const auto tr = forward_trace(mf, Tensor({1, 1, 4, 16, 16}, rep));
        for (std::int64_t p = 0; p < 256; ++p)
            CHECK(tr.output.data()[p] == doctest::Approx(tr.last_layer.data()[p]).epsilon(1e-6));
    }

    TEST_CASE("every parameter receives gradient") {
        HourglassConfig c;
        c.input_width = c.input_height = 16;
        for (auto head : {Head::Sigmoid, Head::FrameMean}) {
            auto m = build_hourglass(c, head, 7);
            const auto y = forward_trace(m, random_input(6, {2, 1, 4, 16, 16})).output;
            backward(mean_all(square(y)));
            for (std::size_t i = 0; i < m.params.size(); ++i) {
                INFO(m.names[i]);
                REQUIRE(m.params[i].has_grad());
                double n = 0.0;
                for (float g : m.params[i].grad()) n += static_cast<double>(g) * g;
                CHECK(n > 0.0);
            }
        }
    }

    TEST_CASE("gradient of the mean output w.r.t. the input matches finite differences") {
        HourglassConfig c;
        c.input_width = c.input_height = 8;
        const auto m = build_hourglass(c, Head::Sigmoid, 12);
        std::vector<Tensor64> ps;
        for (const auto& p : m.params) ps.push_back(p.cast<double>());
        Rng rng(13);
        const auto x = oracle::random_tensor(rng, {1, 1, 3, 8, 8});
        const double err = oracle::gradcheck(
            [&](const auto& v) { return mean_all(hourglass_forward<double>(c, Head::Sigmoid, ps, v[0]).output); }, {x});
        CHECK(err <= 1e-3);
    }

    TEST_CASE("config validation") {
        HourglassConfig c;
        c.input_width = 62;
        CHECK_THROWS_AS(validate(c), std::invalid_argument);
        c = {};
        c.depth = 7;
        CHECK_THROWS_AS(validate(c), std::invalid_argument);
        c = {};
        c.stages = {StageGeometry{{3, 3, 3}, {0, 0, 0}, {1, 1, 1}}, StageGeometry{}};
        CHECK_THROWS_AS(validate(c), std::invalid_argument);
        CHECK_THROWS(hourglass_config_from_json(nlohmann::json{{"depth", 2}, {"widht", 64}}));
        HourglassConfig d;
        d.base_channels = 4;
        CHECK(hourglass_config_from_json(to_json(d)) == d);
    }

    TEST_CASE("Utterson shares Jekyll's architecture") {
        HourglassConfig c;
        const auto j = build_hourglass(c, Head::Sigmoid, 1), u = build_hourglass(c, Head::Sigmoid, 2);
        CHECK(j.config == u.config);
        CHECK(j.head == u.head);
        CHECK(j.names == u.names);
        for (std::size_t i = 0; i < j.params.size(); ++i) CHECK(j.params[i].shape() == u.params[i].shape());
    }

    TEST_CASE("checkpoint round trip is bit exact") {
        HourglassConfig c;
        c.input_width = c.input_height = 16;
        auto m = build_hourglass(c, Head::FrameMean, 21);
        m.epoch = 3;
        const auto dir = std::filesystem::temp_directory_path() / "jh_ckpt_test";
        std::filesystem::remove_all(dir);
        save_checkpoint(m, dir, {{"note", "x"}});
        const auto r = load_checkpoint(dir);
        CHECK(r.epoch == 3);
        CHECK(r.head == Head::FrameMean);
        const auto x = random_input(9, {1, 1, 4, 16, 16});
        const auto a = forward_hyde(m, x), b = forward_hyde(r, x);
        CHECK(std::memcmp(a.data().data(), b.data().data(), a.data().size_bytes()) == 0);
        std::filesystem::remove_all(dir);
    }
}
