#include "doctest.h"

#include <cmath>
#include <set>

#include "jh/scene.hpp"

using namespace jh;

namespace {

SceneSpec small_spec() {
    SceneSpec s;
    s.frames = 16;
    s.width = 64;
    s.height = 64;
    return s;
}

double at(const Tensor& t, std::int64_t f, std::int64_t x, std::int64_t y) {
    return t.data()[static_cast<std::size_t>((f * t.dim(1) + x) * t.dim(2) + y)];
}

}  // namespace

TEST_SUITE("scene") {
    TEST_CASE("flat background without targets or noise") {
        auto s = small_spec();
        s.offset = 3.0;
        const auto c = generate_cube(s);
        for (auto v : c.intensity.data()) REQUIRE(v == 3.0f);
        for (auto v : c.labels.data()) REQUIRE(v == 0.0f);
    }

    TEST_CASE("stationary target gives the same label mask every frame") {
        auto s = small_spec();
        s.targets.push_back({20.3, 30.7, 0.0, 0.0, 5.0, 0.5});
        const auto c = generate_cube(s);
        const auto frame = c.labels.dim(1) * c.labels.dim(2);
        auto d = c.labels.data();
        for (std::int64_t f = 1; f < s.frames; ++f)
            CHECK(std::equal(d.begin(), d.begin() + frame, d.begin() + f * frame));
        CHECK(std::count(d.begin(), d.begin() + frame, 1.0f) >= 1);
    }

    TEST_CASE("label and flux centroids follow the trajectory") {
        auto s = small_spec();
        s.targets.push_back({10.0, 10.0, 1.0, 0.0, 5.0, 0.5});
        const auto c = generate_cube(s);
        for (std::int64_t f = 0; f < s.frames; ++f) {
            double sx = 0, sy = 0, sw = 0, lx = 0, ln = 0;
            for (std::int64_t x = 0; x < s.width; ++x)
                for (std::int64_t y = 0; y < s.height; ++y) {
                    const double v = at(c.intensity, f, x, y);
                    sx += v * x;
                    sy += v * y;
                    sw += v;
                    if (at(c.labels, f, x, y) == 1.0) {
                        lx += x;
                        ++ln;
                    }
                }
            // Pixel i is centred at i + 0.5, so index-space centroids sit half a pixel lower.
            CHECK(sx / sw == doctest::Approx(10.0 + f - 0.5).epsilon(1e-3));
            CHECK(sy / sw == doctest::Approx(10.0 - 0.5).epsilon(1e-3));
            REQUIRE(ln > 0);
            CHECK(std::abs(lx / ln - (10.0 + f - 0.5)) <= 0.5);
        }
    }

    TEST_CASE("labelled pixels per on-screen target stay within the PSF block") {
        auto s = small_spec();
        s.random_targets.count = 6;
        s.noise_sigma = 0.2;
        s.seed = 5;
        const auto c = generate_cube(s);
        const auto frame = c.labels.dim(1) * c.labels.dim(2);
        const double block = std::pow(2 * std::ceil(3 * 0.5) + 1, 2);
        for (std::int64_t f = 0; f < s.frames; ++f) {
            int onscreen = 0;
            for (const auto& t : c.targets) {
                const double x = t.x0 + t.vx * f, y = t.y0 + t.vy * f;
                onscreen += x >= 0 && y >= 0 && x < s.width && y < s.height;
            }
            const auto d = c.labels.data().subspan(static_cast<std::size_t>(f * frame), static_cast<std::size_t>(frame));
            const auto n = std::count(d.begin(), d.end(), 1.0f);
            CHECK(n >= std::min(onscreen, 1));
            CHECK(n <= onscreen * block);
        }
    }

    TEST_CASE("same seed, bit-identical cube; different seed differs") {
        auto s = small_spec();
        s.background_amplitude = 1.0;
        s.decoy_count = 5;
        s.random_targets.count = 3;
        s.noise_sigma = 0.1;
        s.seed = 42;
        const auto a = generate_cube(s), b = generate_cube(s);
        CHECK(std::equal(a.intensity.data().begin(), a.intensity.data().end(), b.intensity.data().begin()));
        CHECK(std::equal(a.labels.data().begin(), a.labels.data().end(), b.labels.data().begin()));
        s.seed = 43;
        const auto c = generate_cube(s);
        CHECK_FALSE(std::equal(a.intensity.data().begin(), a.intensity.data().end(), c.intensity.data().begin()));
    }

    TEST_CASE("invalid specs are rejected") {
        auto s = small_spec();
        s.targets.push_back({-1.0, 5.0, 0, 0, 1.0, 0.5});
        CHECK_THROWS_AS(generate_cube(s), std::invalid_argument);
        s = small_spec();
        s.targets.push_back({5.0, 5.0, 0, 0, 1.0, 1.0});
        CHECK_THROWS_AS(generate_cube(s), std::invalid_argument);
        s = small_spec();
        s.noise_sigma = -1;
        CHECK_THROWS_AS(generate_cube(s), std::invalid_argument);
    }

    TEST_CASE("gaussian scaling") {
        DataCube c;
        c.intensity = Tensor({1, 2, 2}, {0, 0, 4, 4});
        c.labels = Tensor::zeros({1, 2, 2});
        const auto s = gaussian_scale(c);
        CHECK(std::vector<float>(s.intensity.data().begin(), s.intensity.data().end()) ==
              std::vector<float>{-1, -1, 1, 1});
        CHECK(s.mean == 2.0);
        CHECK(s.stddev == 2.0);

        c.intensity = Tensor::full({1, 2, 2}, 3.0f);
        CHECK_THROWS(gaussian_scale(c));

        auto spec = small_spec();
        spec.background_amplitude = 2.0;
        spec.offset = 5.0;
        spec.noise_sigma = 0.5;
        spec.random_targets.count = 4;
        const auto g = gaussian_scale(generate_cube(spec));
        double m = 0, q = 0;
        for (float v : g.intensity.data()) m += v;
        m /= g.intensity.numel();
        for (float v : g.intensity.data()) q += (v - m) * (v - m);
        CHECK(std::abs(m) <= 1e-5);
        CHECK(std::abs(std::sqrt(q / g.intensity.numel()) - 1.0) <= 1e-4);

        // Already scaled input comes back unchanged.
        const auto again = gaussian_scale(g);
        for (std::size_t i = 0; i < again.intensity.data().size(); i += 97)
            CHECK(std::abs(again.intensity.data()[i] - g.intensity.data()[i]) <= 1e-6);
    }

    TEST_CASE("carving counts and content") {
        CHECK(carve_count({32, 128, 128}, {}) == 8);
        CHECK(carve_count({500, 500, 500}, {}) == 1519);
        CHECK(carve_grid({500, 500, 500}, {}) == Extent3{31, 7, 7});
        CHECK(carve_count({64, 256, 256}, {}) == 64);
        CHECK(carve_count({16, 64, 64}, {{16, 64, 64}, {8, 32, 32}}) == 1);
        CHECK(carve_count({32, 128, 128}, {{16, 64, 64}, {8, 32, 32}}) == 3 * 3 * 3);

        auto s = small_spec();
        s.random_targets.count = 2;
        s.noise_sigma = 1.0;
        const auto cube = generate_cube(s);
        const auto one = carve_samples(cube);
        REQUIRE(one.size() == 1);
        CHECK(one[0].input.shape() == Shape{1, 16, 64, 64});
        CHECK(std::equal(one[0].input.data().begin(), one[0].input.data().end(), cube.intensity.data().begin()));

        s.width = 128;
        const auto wide = generate_cube(s);
        const auto two = carve_samples(wide, {}, 3);
        REQUIRE(two.size() == 2);
        CHECK(two[1].provenance.x == 64);
        CHECK(two[1].provenance.cube_id == 3);
        CHECK(two[1].label.data()[0] == at(wide.labels, 0, 64, 0));
        CHECK(two[1].input.data()[5] == static_cast<float>(at(wide.intensity, 0, 64, 5)));

        CHECK_THROWS(carve_samples(wide, {{32, 64, 64}, {0, 0, 0}}));
    }

    TEST_CASE("split follows the floor rule and partitions the samples") {
        for (std::size_t n : {0u, 1u, 7u, 10u, 48u, 64u, 1000u}) {
            if (n == 0) {
                CHECK_THROWS(split_indices(n, {}, 1));
                continue;
            }
            const auto s = split_indices(n, {}, 9);
            CHECK(s.train.size() == static_cast<std::size_t>(std::floor(0.5 * n + 1e-9)));
            CHECK(s.val.size() == static_cast<std::size_t>(std::floor(0.2 * n + 1e-9)));
            CHECK(s.train.size() + s.val.size() + s.test.size() == n);
            std::set<std::size_t> all(s.train.begin(), s.train.end());
            all.insert(s.val.begin(), s.val.end());
            all.insert(s.test.begin(), s.test.end());
            CHECK(all.size() == n);
        }
        const auto a = split_indices(1000, {}, 1);
        CHECK(a.train.size() == 500);
        CHECK(a.val.size() == 200);
        CHECK(a.test.size() == 300);
        CHECK(split_indices(10, {}, 1).test.size() == 3);
        CHECK(split_indices(1000, {}, 1).train == a.train);
        CHECK(split_indices(1000, {}, 2).train != a.train);
        CHECK_THROWS(split_indices(10, {0.5, 0.5, 0.5}, 1));
    }
}
