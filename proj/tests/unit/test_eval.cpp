#include "doctest.h"

#include "jh/eval.hpp"
#include "jh/random.hpp"

using namespace jh;

TEST_SUITE("eval") {
    TEST_CASE("hand-computed confusion fixture") {
        const std::vector<float> out{0.9f, 0.2f, 0.6f, 0.1f, 0.5f, 0.7f};
        const std::vector<float> lab{1, 1, 0, 0, 1, 0};
        const auto pred = threshold(out, 0.5);
        CHECK(pred == std::vector<std::uint8_t>{1, 0, 1, 0, 1, 1});
        const auto c = confusion(pred, std::span<const float>(lab));
        CHECK(c == Confusion{2, 2, 1, 1});
        const auto m = metrics(c);
        CHECK(*m.ppv.value() == 0.5);
        CHECK(*m.npv.value() == 0.5);
        CHECK(*m.sensitivity.value() == doctest::Approx(2.0 / 3));
        CHECK(*m.specificity.value() == doctest::Approx(1.0 / 3));
        // threshold is inclusive
        CHECK(threshold(std::vector<float>{0.5f}, 0.5)[0] == 1);
    }

    TEST_CASE("undefined metrics are empty and print as blanks") {
        const auto m = metrics({0, 0, 5, 0});
        CHECK_FALSE(m.ppv.value().has_value());
        CHECK_FALSE(m.sensitivity.value().has_value());
        CHECK(*m.npv.value() == 1.0);
        const std::vector<float> out{0.1f, 0.2f};
        const std::vector<float> lab{0, 0};
        const auto csv = to_csv(sweep(out, lab, {0.5}));
        CHECK(csv == std::string(kSweepCsvHeader) + "\n0.500000,0,0,2,0,,1.000000,,1.000000\n");
        CHECK(csv.find("nan") == std::string::npos);
    }

    TEST_CASE("constant 0.5 output") {
        const std::vector<float> out(10, 0.5f);
        std::vector<float> lab(10, 0.0f);
        lab[2] = lab[7] = 1.0f;
        const auto t = sweep(out, lab, {0.5, 0.6});
        CHECK(*t.at(0.5).metrics.sensitivity.value() == 1.0);
        CHECK(*t.at(0.5).metrics.specificity.value() == 0.0);
        CHECK(*t.at(0.6).metrics.sensitivity.value() == 0.0);
        CHECK(*t.at(0.6).metrics.specificity.value() == 1.0);
        CHECK_THROWS_AS(t.at(0.55), std::out_of_range);
    }

    TEST_CASE("sweep agrees with per-threshold counting and is monotone") {
        Rng rng(51);
        for (int f = 0; f < 100; ++f) {
            const auto n = 1 + rng.below(300);
            std::vector<float> out(n), lab(n);
            for (std::size_t i = 0; i < n; ++i) {
                out[i] = static_cast<float>(std::round(rng.uniform() * 20) / 20);  // plenty of ties on the grid
                lab[i] = rng.uniform() < 0.3 ? 1.0f : 0.0f;
            }
            const auto t = sweep(out, lab, default_thresholds());
            for (std::size_t r = 0; r < t.rows.size(); ++r) {
                const auto& row = t.rows[r];
                CHECK(row.counts == confusion(threshold(out, row.threshold), std::span<const float>(lab)));
                if (r == 0) continue;
                const auto& prev = t.rows[r - 1].metrics;
                if (prev.sensitivity.value() && row.metrics.sensitivity.value())
                    CHECK(*row.metrics.sensitivity.value() <= *prev.sensitivity.value());
                if (prev.specificity.value() && row.metrics.specificity.value())
                    CHECK(*row.metrics.specificity.value() >= *prev.specificity.value());
            }
        }
    }

    TEST_CASE("rescale to the unit interval") {
        const std::vector<float> out{0.0f, 0.225f, 0.45f};
        const auto r = rescale_unit(out);
        CHECK(r[0] == 0.0f);
        CHECK(r[1] == doctest::Approx(0.5));
        CHECK(r[2] == 1.0f);
        CHECK_THROWS(rescale_unit(std::vector<float>{0.3f, 0.3f}));
        CHECK_THROWS(rescale_unit(std::vector<float>{}));
    }

    TEST_CASE("default thresholds and argument checks") {
        const auto t = default_thresholds();
        CHECK(t.size() == 19);
        CHECK(t.front() == doctest::Approx(0.05));
        CHECK(t.back() == doctest::Approx(0.95));
        const std::vector<float> out{0.1f};
        CHECK_THROWS(sweep(out, std::vector<float>{0.5f}, t));
        CHECK_THROWS(sweep(out, std::vector<float>{1.0f, 0.0f}, t));
        CHECK_THROWS(sweep(out, std::vector<float>{1.0f}, {0.2, 0.1}));
        CHECK_THROWS(confusion(std::vector<std::uint8_t>{1}, std::vector<std::uint8_t>{2}));
    }
}
