#pragma once

// Training loops for the Jekyll/Hyde pair and the supervised Utterson baseline,
// test-set evaluation, and the Input/Hyde/Jekyll/Subtr/Utterson/Label panels.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "jh/eval.hpp"
#include "jh/hourglass.hpp"
#include "jh/loss.hpp"
#include "jh/scene.hpp"

namespace jh {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 8;
    double lr_hyde = 5.0e-4;
    double lr_utterson = 5.0e-4;
    double lr_jekyll = 5.0e-5;
    double weight_decay = 0.01;
    double alpha = kDefaultAlpha;
    double epsilon = kDefaultEpsilon;
    std::uint64_t seed = 0;
    bool shuffle = true;
};

void validate(const TrainConfig& config);
nlohmann::json to_json(const TrainConfig& config);

struct EpochRecord {
    std::int64_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;  // NaN-free; 0 when there is no validation data
    // Unsupervised runs only.
    double train_background_term = 0.0;
    double train_mask_cost = 0.0;
    double mask_above_one_minus_eps = 0.0;  // fraction of Jekyll outputs in the negative-coefficient region

    nlohmann::json to_json() const;
};

struct RunRecord {
    std::string mode;
    std::vector<EpochRecord> epochs;
    double wall_seconds = 0.0;
    nlohmann::json config;
    std::vector<std::string> checkpoints;
    std::int64_t batches = 0;  // optimizer steps per model
};

// Thrown when a training loss is not finite; carries the offending batch state.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, nlohmann::json diagnostics)
        : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}
    const nlohmann::json& diagnostics() const { return diagnostics_; }

private:
    nlohmann::json diagnostics_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Stacks samples into [K, 1, N, W, H] input and label batches.
std::pair<Tensor, Tensor> stack_batch(const std::vector<Sample>& samples, std::span<const std::size_t> indices);

// One dual-loss backward pass per batch, then one Adam step per model with its own
// learning rate. Validation data is only monitored.
RunRecord train_unsupervised(Model& jekyll, Model& hyde, const std::vector<Sample>& train,
                             const std::vector<Sample>& val, const TrainConfig& config,
                             const EpochCallback& on_epoch = {});

RunRecord train_supervised(Model& utterson, const std::vector<Sample>& train, const std::vector<Sample>& val,
                           const TrainConfig& config, const EpochCallback& on_epoch = {});

// Sample-ordered concatenation of model outputs (no gradient).
std::vector<float> predict(const Model& model, const std::vector<Sample>& samples, int batch_size = 8);

struct Evaluation {
    std::optional<SweepTable> jekyll;
    std::optional<SweepTable> utterson;  // swept after global min-max rescaling
};

Evaluation evaluate(const Model* jekyll, const Model* utterson, const std::vector<Sample>& test,
                    const std::vector<double>& thresholds = default_thresholds(), int batch_size = 8);

inline constexpr std::array<std::int64_t, 4> kPanelFrames{0, 4, 8, 12};
inline constexpr std::array<const char*, 6> kPanelColumns{"Input", "Hyde", "Jekyll", "Subtr", "Utterson", "Label"};

struct PanelGrid {
    std::int64_t width = 0;   // 6 * (W + gutter)
    std::int64_t height = 0;  // 4 * (H + gutter)
    std::vector<std::uint8_t> pixels;  // row-major grayscale
    Tensor cells;  // [4, 6, W, H] values before display normalisation
};

// Each tensor is read through its trailing three axes (N, W, H); Hyde's has N == 1.
// Within a cell, image rows follow the height axis and columns the width axis.
PanelGrid render_panels(const Tensor& input, const Tensor& hyde_out, const Tensor& jekyll_out,
                        const Tensor& utterson_out, const Tensor& labels, std::int64_t gutter = 2);

std::vector<std::uint8_t> encode_pgm(const PanelGrid& grid);
void write_pgm(const std::filesystem::path& path, const PanelGrid& grid);

}  // namespace jh
