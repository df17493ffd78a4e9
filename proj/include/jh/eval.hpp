#pragma once

// Pixel-level scoring: thresholding, confusion counts, PPV/NPV/sensitivity/
// specificity, global min-max rescaling and threshold sweeps.

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace jh {

// 1 where output >= t, else 0.
std::vector<std::uint8_t> threshold(std::span<const float> outputs, double t);

struct Confusion {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t tn = 0;
    std::int64_t fn = 0;

    std::int64_t total() const { return tp + fp + tn + fn; }
    bool operator==(const Confusion&) const = default;
};

// Labels may be given as 0/1 floats or bytes; anything else is rejected.
Confusion confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> labels);
Confusion confusion(std::span<const std::uint8_t> pred, std::span<const float> labels);

// Exact num/den; value() is empty when den == 0.
struct Ratio {
    std::int64_t num = 0;
    std::int64_t den = 0;

    std::optional<double> value() const {
        if (den == 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    }
};

struct Metrics {
    Ratio ppv;
    Ratio npv;
    Ratio sensitivity;
    Ratio specificity;
};

Metrics metrics(const Confusion& c);

// (x - min) / (max - min) over the whole set; rejects constant input.
std::vector<float> rescale_unit(std::span<const float> outputs);

struct SweepRow {
    double threshold = 0.0;
    Confusion counts;
    Metrics metrics;
};

struct SweepTable {
    std::vector<SweepRow> rows;
    const SweepRow& at(double t) const;
};

// 0.05, 0.10, ..., 0.95
std::vector<double> default_thresholds();

// Thresholds must be strictly increasing.
SweepTable sweep(std::span<const float> outputs, std::span<const float> labels, const std::vector<double>& thresholds);

inline constexpr const char* kSweepCsvHeader = "threshold,tp,fp,tn,fn,ppv,npv,sensitivity,specificity";

// Fixed 6-decimal metrics, empty field for undefined.
void write_csv(std::ostream& os, const SweepTable& table);
std::string to_csv(const SweepTable& table);

}  // namespace jh
