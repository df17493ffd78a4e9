#include "jh/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "jh/random.hpp"

namespace jh {

namespace {

void fail(const std::string& msg) { throw std::invalid_argument("scene: " + msg); }

// Integral of exp(-(u - c)^2 / (2 s^2)) over the unit pixel [i, i + 1).
double pixel_integral(std::int64_t i, double c, double s) {
    const double k = 1.0 / (s * std::sqrt(2.0));
    return s * std::sqrt(M_PI / 2.0) * (std::erf((static_cast<double>(i + 1) - c) * k) - std::erf((static_cast<double>(i) - c) * k));
}

struct Footprint {
    std::int64_t x_lo, x_hi, y_lo, y_hi;  // inclusive, clipped to the frame
    std::vector<double> flux;             // row-major over the clipped block
    double peak = 0.0;
};

// Flux of a point source centred at (cx, cy) on the (2r+1)^2 block around its pixel,
// r = ceil(3 sigma).
Footprint footprint(double cx, double cy, double amplitude, double sigma, std::int64_t width, std::int64_t height) {
    const auto r = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
    const auto px = static_cast<std::int64_t>(std::floor(cx));
    const auto py = static_cast<std::int64_t>(std::floor(cy));
    Footprint fp{std::max<std::int64_t>(0, px - r), std::min(width - 1, px + r), std::max<std::int64_t>(0, py - r),
                 std::min(height - 1, py + r), {}, 0.0};
    std::vector<double> iy;
    for (auto y = fp.y_lo; y <= fp.y_hi; ++y) iy.push_back(pixel_integral(y, cy, sigma));
    for (auto x = fp.x_lo; x <= fp.x_hi; ++x) {
        const double ix = pixel_integral(x, cx, sigma);
        for (double v : iy) {
            fp.flux.push_back(amplitude * ix * v);
            fp.peak = std::max(fp.peak, amplitude * ix * v);
        }
    }
    return fp;
}

void deposit(std::span<float> frame, std::span<float> label_frame, const Footprint& fp, std::int64_t height) {
    std::size_t k = 0;
    for (auto x = fp.x_lo; x <= fp.x_hi; ++x)
        for (auto y = fp.y_lo; y <= fp.y_hi; ++y, ++k) {
            const auto idx = static_cast<std::size_t>(x * height + y);
            frame[idx] += static_cast<float>(fp.flux[k]);
            if (!label_frame.empty() && fp.flux[k] > kLabelFraction * fp.peak) label_frame[idx] = 1.0f;
        }
}

// White noise smoothed by a periodic separable Gaussian, normalised to unit std.
std::vector<double> smooth_field(Rng& rng, std::int64_t width, std::int64_t height, double scale) {
    std::vector<double> field(static_cast<std::size_t>(width * height));
    for (auto& v : field) v = rng.normal();
    if (scale > 0.0) {
        const auto r = static_cast<std::int64_t>(std::ceil(3.0 * scale));
        std::vector<double> kernel;
        for (auto d = -r; d <= r; ++d) kernel.push_back(std::exp(-0.5 * double(d * d) / (scale * scale)));
        std::vector<double> tmp(field.size());
        for (std::int64_t x = 0; x < width; ++x)
            for (std::int64_t y = 0; y < height; ++y) {
                double acc = 0.0;
                for (auto d = -r; d <= r; ++d) acc += kernel[d + r] * field[x * height + ((y + d) % height + height) % height];
                tmp[x * height + y] = acc;
            }
        for (std::int64_t x = 0; x < width; ++x)
            for (std::int64_t y = 0; y < height; ++y) {
                double acc = 0.0;
                for (auto d = -r; d <= r; ++d) acc += kernel[d + r] * tmp[((x + d) % width + width) % width * height + y];
                field[x * height + y] = acc;
            }
    }
    const double mean = std::accumulate(field.begin(), field.end(), 0.0) / double(field.size());
    double var = 0.0;
    for (auto v : field) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / double(field.size()));
    for (auto& v : field) v = sd > 0.0 ? (v - mean) / sd : 0.0;
    return field;
}

}  // namespace

void validate(const SceneSpec& s) {
    if (s.frames < 1 || s.width < 1 || s.height < 1) fail("cube extents must be positive");
    if (s.background_amplitude < 0.0) fail("background_amplitude must be non-negative");
    if (s.background_scale < 0.0) fail("background_scale must be non-negative");
    if (s.noise_sigma < 0.0) fail("noise_sigma must be non-negative");
    if (s.decoy_count < 0) fail("decoy_count must be non-negative");
    if (s.decoy_peak_min > s.decoy_peak_max) fail("decoy peak range is empty");
    if (!(s.decoy_psf_sigma > 0.0 && s.decoy_psf_sigma < 1.0)) fail("decoy_psf_sigma must be in (0, 1)");
    const auto& rt = s.random_targets;
    if (rt.count < 0) fail("random_targets.count must be non-negative");
    if (rt.speed_min < 0.0 || rt.speed_min > rt.speed_max) fail("random_targets speed range is invalid");
    if (rt.peak_min > rt.peak_max) fail("random_targets peak range is empty");
    if (!(rt.psf_sigma > 0.0 && rt.psf_sigma < 1.0)) fail("random_targets.psf_sigma must be in (0, 1)");
    for (std::size_t i = 0; i < s.targets.size(); ++i) {
        const auto& t = s.targets[i];
        const auto id = "target " + std::to_string(i);
        if (!(t.psf_sigma > 0.0 && t.psf_sigma < 1.0)) fail(id + ": psf_sigma must be in (0, 1)");
        if (!(t.peak > 0.0)) fail(id + ": peak must be positive");
        if (!(t.x0 >= 0.0 && t.x0 < double(s.width) && t.y0 >= 0.0 && t.y0 < double(s.height)))
            fail(id + ": starts outside the cube at (" + std::to_string(t.x0) + ", " + std::to_string(t.y0) + ")");
    }
}

DataCube generate_cube(const SceneSpec& spec) {
    validate(spec);
    const auto F = spec.frames, W = spec.width, H = spec.height;
    const auto plane = static_cast<std::size_t>(W * H);
    Rng rng(spec.seed);

    // Static background frame.
    std::vector<float> background(plane, static_cast<float>(spec.offset));
    if (spec.background_amplitude > 0.0) {
        const auto field = smooth_field(rng, W, H, spec.background_scale);
        for (std::size_t i = 0; i < plane; ++i)
            background[i] = static_cast<float>(spec.offset + spec.background_amplitude * field[i]);
    }
    for (int d = 0; d < spec.decoy_count; ++d) {
        const double x = rng.uniform(0.0, double(W));
        const double y = rng.uniform(0.0, double(H));
        const double peak = rng.uniform(spec.decoy_peak_min, spec.decoy_peak_max);
        deposit(background, {}, footprint(x, y, peak, spec.decoy_psf_sigma, W, H), H);
    }

    std::vector<TargetSpec> targets = spec.targets;
    const auto& rt = spec.random_targets;
    for (int i = 0; i < rt.count; ++i) {
        TargetSpec t;
        t.x0 = rng.uniform(0.0, double(W));
        t.y0 = rng.uniform(0.0, double(H));
        const double heading = rng.uniform(0.0, 2.0 * M_PI);
        const double speed = rng.uniform(rt.speed_min, rt.speed_max);
        t.vx = speed * std::cos(heading);
        t.vy = speed * std::sin(heading);
        t.peak = rng.uniform(rt.peak_min, rt.peak_max);
        t.psf_sigma = rt.psf_sigma;
        targets.push_back(t);
    }

    std::vector<float> intensity(static_cast<std::size_t>(F) * plane);
    std::vector<float> labels(intensity.size(), 0.0f);
    for (std::int64_t f = 0; f < F; ++f) {
        std::span<float> frame(intensity.data() + f * plane, plane);
        std::span<float> label_frame(labels.data() + f * plane, plane);
        std::copy(background.begin(), background.end(), frame.begin());
        for (const auto& t : targets) {
            const double cx = t.x0 + t.vx * double(f);
            const double cy = t.y0 + t.vy * double(f);
            if (cx < 0.0 || cx >= double(W) || cy < 0.0 || cy >= double(H)) continue;
            deposit(frame, label_frame, footprint(cx, cy, t.peak, t.psf_sigma, W, H), H);
        }
        if (spec.noise_sigma > 0.0)
            for (auto& v : frame) v += static_cast<float>(spec.noise_sigma * rng.normal());
    }

    DataCube cube;
    cube.intensity = Tensor({F, W, H}, std::move(intensity));
    cube.labels = Tensor({F, W, H}, std::move(labels));
    cube.targets = std::move(targets);
    return cube;
}

DataCube gaussian_scale(DataCube cube) {
    auto values = cube.intensity.data();
    if (values.empty()) throw std::invalid_argument("gaussian_scale: empty cube");
    double sum = 0.0;
    for (float v : values) sum += v;
    const double mean = sum / double(values.size());
    double var = 0.0;
    for (float v : values) var += (double(v) - mean) * (double(v) - mean);
    const double sd = std::sqrt(var / double(values.size()));
    if (!(sd > 0.0)) throw std::invalid_argument("gaussian_scale: cube has zero standard deviation");
    std::vector<float> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>((double(values[i]) - mean) / sd);
    cube.intensity = Tensor(cube.intensity.shape(), std::move(out));
    cube.mean = mean;
    cube.stddev = sd;
    cube.scaled = true;
    return cube;
}

Extent3 carve_grid(const Extent3& cube, const CarveOptions& options) {
    Extent3 grid{};
    for (int a = 0; a < 3; ++a) {
        const auto e = options.extent[a];
        const auto s = options.stride[a] == 0 ? e : options.stride[a];
        if (e < 1) throw std::invalid_argument("carve: sample extent must be positive");
        if (s < 1) throw std::invalid_argument("carve: stride must be >= 1");
        if (e > cube[a])
            throw std::invalid_argument("carve: sample extent " + std::to_string(e) + " exceeds cube extent " +
                                        std::to_string(cube[a]) + " on axis " + std::to_string(a));
        grid[a] = (cube[a] - e) / s + 1;
    }
    return grid;
}

std::int64_t carve_count(const Extent3& cube, const CarveOptions& options) {
    const auto g = carve_grid(cube, options);
    return g[0] * g[1] * g[2];
}

std::vector<Sample> carve_samples(const DataCube& cube, const CarveOptions& options, int cube_id) {
    if (cube.intensity.ndim() != 3) throw std::invalid_argument("carve: cube must be 3-d [F, W, H]");
    const auto& cs = cube.intensity.shape();
    const Extent3 ext{cs[0], cs[1], cs[2]};
    const auto grid = carve_grid(ext, options);
    const auto [N, Ws, Hs] = options.extent;
    Extent3 stride = options.stride;
    for (int a = 0; a < 3; ++a)
        if (stride[a] == 0) stride[a] = options.extent[a];

    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(grid[0] * grid[1] * grid[2]));
    auto src_i = cube.intensity.data();
    auto src_l = cube.labels.data();
    for (std::int64_t gt = 0; gt < grid[0]; ++gt)
        for (std::int64_t gx = 0; gx < grid[1]; ++gx)
            for (std::int64_t gy = 0; gy < grid[2]; ++gy) {
                const Provenance p{cube_id, gt * stride[0], gx * stride[1], gy * stride[2]};
                std::vector<float> in(static_cast<std::size_t>(N * Ws * Hs));
                std::vector<float> lab(in.size());
                std::size_t k = 0;
                for (std::int64_t t = 0; t < N; ++t)
                    for (std::int64_t x = 0; x < Ws; ++x, k += static_cast<std::size_t>(Hs)) {
                        const auto off = static_cast<std::size_t>(((p.t + t) * ext[1] + p.x + x) * ext[2] + p.y);
                        std::copy_n(src_i.data() + off, Hs, in.data() + k);
                        std::copy_n(src_l.data() + off, Hs, lab.data() + k);
                    }
                samples.push_back({Tensor({1, N, Ws, Hs}, std::move(in)), Tensor({1, N, Ws, Hs}, std::move(lab)), p});
            }
    return samples;
}

SplitIndices split_indices(std::size_t n, const SplitFractions& f, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("split: empty sample list");
    if (f.train < 0.0 || f.val < 0.0 || f.test < 0.0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must be non-negative and sum to 1");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

    // The small bias keeps exact products such as 0.2 * 10 from flooring down.
    const auto n_train = static_cast<std::size_t>(std::floor(f.train * double(n) + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(f.val * double(n) + 1e-9));
    SplitIndices s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
    return s;
}

DatasetSplit split_dataset(const std::vector<Sample>& samples, const SplitFractions& fractions, std::uint64_t seed) {
    const auto idx = split_indices(samples.size(), fractions, seed);
    DatasetSplit out;
    for (auto i : idx.train) out.train.push_back(samples[i]);
    for (auto i : idx.val) out.val.push_back(samples[i]);
    for (auto i : idx.test) out.test.push_back(samples[i]);
    return out;
}

}  // namespace jh
