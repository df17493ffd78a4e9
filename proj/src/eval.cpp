#include "jh/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace jh {

std::vector<std::uint8_t> threshold(std::span<const float> outputs, double t) {
    std::vector<std::uint8_t> out(outputs.size());
    for (std::size_t i = 0; i < outputs.size(); ++i) out[i] = static_cast<double>(outputs[i]) >= t ? 1 : 0;
    return out;
}

namespace {

template <typename L>
Confusion count(std::span<const std::uint8_t> pred, std::span<const L> labels) {
    if (pred.size() != labels.size())
        throw std::invalid_argument("confusion: " + std::to_string(pred.size()) + " predictions vs " +
                                    std::to_string(labels.size()) + " labels");
    Confusion c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] > 1) throw std::invalid_argument("confusion: prediction is not binary");
        if (labels[i] != L(0) && labels[i] != L(1)) throw std::invalid_argument("confusion: label is not binary");
        const bool p = pred[i] == 1;
        const bool y = labels[i] == L(1);
        if (p && y) ++c.tp;
        else if (p) ++c.fp;
        else if (y) ++c.fn;
        else ++c.tn;
    }
    return c;
}

}  // namespace

Confusion confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> labels) {
    return count(pred, labels);
}

Confusion confusion(std::span<const std::uint8_t> pred, std::span<const float> labels) { return count(pred, labels); }

Metrics metrics(const Confusion& c) {
    return {{c.tp, c.tp + c.fp}, {c.tn, c.tn + c.fn}, {c.tp, c.tp + c.fn}, {c.tn, c.tn + c.fp}};
}

std::vector<float> rescale_unit(std::span<const float> outputs) {
    if (outputs.empty()) throw std::invalid_argument("rescale_unit: no outputs");
    const auto [lo_it, hi_it] = std::minmax_element(outputs.begin(), outputs.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) throw std::invalid_argument("rescale_unit: outputs are constant");
    std::vector<float> out(outputs.size());
    for (std::size_t i = 0; i < outputs.size(); ++i)
        out[i] = static_cast<float>((static_cast<double>(outputs[i]) - lo) / (hi - lo));
    return out;
}

const SweepRow& SweepTable::at(double t) const {
    for (const auto& r : rows)
        if (std::abs(r.threshold - t) < 1e-9) return r;
    throw std::out_of_range("sweep table has no row for threshold " + std::to_string(t));
}

std::vector<double> default_thresholds() {
    std::vector<double> t;
    for (int i = 1; i <= 19; ++i) t.push_back(0.05 * i);
    return t;
}

SweepTable sweep(std::span<const float> outputs, std::span<const float> labels, const std::vector<double>& thresholds) {
    if (outputs.size() != labels.size())
        throw std::invalid_argument("sweep: " + std::to_string(outputs.size()) + " outputs vs " +
                                    std::to_string(labels.size()) + " labels");
    for (std::size_t i = 1; i < thresholds.size(); ++i)
        if (!(thresholds[i] > thresholds[i - 1])) throw std::invalid_argument("sweep: thresholds must be strictly increasing");
    for (auto y : labels)
        if (y != 0.0f && y != 1.0f) throw std::invalid_argument("sweep: label is not binary");

    // Sort once; each threshold is then a binary search per class.
    std::vector<float> pos, neg;
    for (std::size_t i = 0; i < outputs.size(); ++i) (labels[i] == 1.0f ? pos : neg).push_back(outputs[i]);
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    auto at_or_above = [](const std::vector<float>& v, double t) {
        auto it = std::partition_point(v.begin(), v.end(), [t](float x) { return static_cast<double>(x) < t; });
        return static_cast<std::int64_t>(v.end() - it);
    };

    SweepTable table;
    for (double t : thresholds) {
        Confusion c;
        c.tp = at_or_above(pos, t);
        c.fn = static_cast<std::int64_t>(pos.size()) - c.tp;
        c.fp = at_or_above(neg, t);
        c.tn = static_cast<std::int64_t>(neg.size()) - c.fp;
        table.rows.push_back({t, c, metrics(c)});
    }
    return table;
}

void write_csv(std::ostream& os, const SweepTable& table) {
    auto field = [](const Ratio& r) {
        const auto v = r.value();
        if (!v) return std::string();
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", *v);
        return std::string(buf);
    };
    os << kSweepCsvHeader << '\n';
    for (const auto& r : table.rows) {
        char t[32];
        std::snprintf(t, sizeof t, "%.6f", r.threshold);
        os << t << ',' << r.counts.tp << ',' << r.counts.fp << ',' << r.counts.tn << ',' << r.counts.fn << ','
           << field(r.metrics.ppv) << ',' << field(r.metrics.npv) << ',' << field(r.metrics.sensitivity) << ','
           << field(r.metrics.specificity) << '\n';
    }
}

std::string to_csv(const SweepTable& table) {
    std::ostringstream os;
    write_csv(os, table);
    return os.str();
}

}  // namespace jh
