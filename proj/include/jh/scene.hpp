#pragma once

// Synthetic infrared-like scenes: a static background (smooth field plus bright
// point decoys), spatially unresolved targets on straight-line tracks, and
// white sensor noise. Also the dataset plumbing: Gaussian scaling, carving into
// fixed-size samples, and the train/validation/test split.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "jh/ops.hpp"
#include "jh/tensor.hpp"

namespace jh {

// Continuous coordinates: pixel i covers [i, i + 1), so its centre is at i + 0.5.
struct TargetSpec {
    double x0 = 0.0;  // position at frame 0, pixels along the width axis
    double y0 = 0.0;  // pixels along the height axis
    double vx = 0.0;  // pixels per frame
    double vy = 0.0;
    double peak = 1.0;        // amplitude of the continuous point-spread function
    double psf_sigma = 0.5;  // must be in (0, 1)
};

// Extra targets drawn from the scene seed.
struct RandomTargets {
    int count = 0;
    double speed_min = 0.5;
    double speed_max = 1.5;
    double peak_min = 2.0;
    double peak_max = 4.0;
    double psf_sigma = 0.5;
};

struct SceneSpec {
    std::int64_t frames = 64;
    std::int64_t width = 256;
    std::int64_t height = 256;

    double offset = 0.0;                // constant baseline
    double background_amplitude = 0.0;  // std of the smooth field
    double background_scale = 8.0;      // smoothing length of the field, pixels

    int decoy_count = 0;
    double decoy_peak_min = 2.0;
    double decoy_peak_max = 4.0;
    double decoy_psf_sigma = 0.5;

    std::vector<TargetSpec> targets;
    RandomTargets random_targets;

    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

// Throws std::invalid_argument describing the first violated constraint.
void validate(const SceneSpec& spec);

struct DataCube {
    Tensor intensity;  // [F, W, H]
    Tensor labels;     // [F, W, H], values in {0, 1}
    double mean = 0.0;    // statistics of the unscaled intensity
    double stddev = 1.0;  // population standard deviation
    bool scaled = false;
    std::vector<TargetSpec> targets;  // explicit plus drawn targets
};

// Fraction of a target's per-frame peak pixel flux above which a pixel is labelled.
inline constexpr double kLabelFraction = 0.1;

DataCube generate_cube(const SceneSpec& spec);

// (x - mean) / population std over the whole cube; labels untouched.
DataCube gaussian_scale(DataCube cube);

struct Provenance {
    int cube_id = 0;
    std::int64_t t = 0;
    std::int64_t x = 0;
    std::int64_t y = 0;
};

struct Sample {
    Tensor input;  // [1, N, W, H]
    Tensor label;  // [1, N, W, H]
    Provenance provenance;
};

struct CarveOptions {
    Extent3 extent{16, 64, 64};
    Extent3 stride{0, 0, 0};  // zero means "same as extent" (non-overlapping)
};

// Number of samples along each axis; partial tiles at the far edges are dropped.
Extent3 carve_grid(const Extent3& cube, const CarveOptions& options);
std::int64_t carve_count(const Extent3& cube, const CarveOptions& options);

// Samples in (t, x, y) raster order.
std::vector<Sample> carve_samples(const DataCube& cube, const CarveOptions& options = {}, int cube_id = 0);

struct SplitFractions {
    double train = 0.5;
    double val = 0.2;
    double test = 0.3;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

// Seeded shuffle, then floor(f * n) for train and validation; the rest is test.
SplitIndices split_indices(std::size_t n, const SplitFractions& fractions, std::uint64_t seed);

struct DatasetSplit {
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;
};

DatasetSplit split_dataset(const std::vector<Sample>& samples, const SplitFractions& fractions, std::uint64_t seed);

}  // namespace jh
