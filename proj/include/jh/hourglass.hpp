#pragma once

// Hourglass 3D-CNN shared by Jekyll, Hyde and Utterson.
//
// Encoder stage s: conv3d (base * 2^s channels) + ReLU, activation kept for the
// skip connection, then spatial max-pool with indices. Decoder stages run in
// mirror order: max-unpool with the partner's indices, concatenate the partner's
// activation, transposed conv + ReLU. A 1x1x1 conv projects to one channel and
// the head is applied last.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "jh/ops.hpp"
#include "jh/tensor.hpp"

namespace jh {

enum class Head { Sigmoid, FrameMean };

std::string to_string(Head head);
Head head_from_string(const std::string& name);

struct StageGeometry {
    Extent3 kernel{3, 3, 3};
    Extent3 padding{1, 1, 1};
    Extent3 stride{1, 1, 1};

    bool operator==(const StageGeometry&) const = default;
};

struct HourglassConfig {
    int depth = 2;
    std::int64_t base_channels = 8;
    std::int64_t in_channels = 1;
    std::vector<StageGeometry> stages;  // one per encoder stage; empty means all default
    Extent3 pool{1, 2, 2};
    std::int64_t input_width = 64;
    std::int64_t input_height = 64;

    StageGeometry stage(int s) const;
    std::int64_t channels(int s) const { return base_channels << s; }

    bool operator==(const HourglassConfig&) const = default;
};

void validate(const HourglassConfig& config);

// Closed-form count of all weights and biases.
std::int64_t parameter_count(const HourglassConfig& config);

struct Model {
    HourglassConfig config;
    Head head = Head::Sigmoid;
    std::uint64_t seed = 0;
    std::int64_t epoch = 0;
    std::vector<std::string> names;
    std::vector<Tensor> params;

    std::int64_t parameter_count() const;
};

// Weights uniform in +-sqrt(6 / (fan_in + fan_out)) from the seed; biases zero.
Model build_hourglass(const HourglassConfig& config, Head head, std::uint64_t seed);

template <typename T>
struct ForwardTrace {
    BasicTensor<T> output;
    BasicTensor<T> last_layer;  // projection output before the head
};

// Generic forward over an explicit parameter list (used for the double-precision shadow).
template <typename T>
ForwardTrace<T> hourglass_forward(const HourglassConfig& config, Head head, std::span<const BasicTensor<T>> params,
                                  const BasicTensor<T>& input);

ForwardTrace<float> forward_trace(const Model& model, const Tensor& input);

// [K,1,N,W,H] -> probabilities of the same shape. Requires the sigmoid head.
Tensor forward_jekyll(const Model& model, const Tensor& input);
// [K,1,N,W,H] -> [K,1,1,W,H] pseudo-background. Requires the frame-mean head.
Tensor forward_hyde(const Model& model, const Tensor& input);

nlohmann::json to_json(const HourglassConfig& config);
HourglassConfig hourglass_config_from_json(const nlohmann::json& j);

// Directory with manifest.json plus one JHT1 file per parameter.
void save_checkpoint(const Model& model, const std::filesystem::path& dir, const nlohmann::json& extra = {});
Model load_checkpoint(const std::filesystem::path& dir);

}  // namespace jh
