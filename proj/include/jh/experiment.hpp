#pragma once

// Experiment configuration and the generate/train/eval/render commands behind
// the jhtrack tool. Everything lives under one workspace directory:
//   data/     cube, samples and split manifest
//   runs/     checkpoints and per-epoch JSONL records
//   eval/     sweep CSVs
//   figures/  PGM panels

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "jh/hourglass.hpp"
#include "jh/json_util.hpp"
#include "jh/pipeline.hpp"
#include "jh/scene.hpp"

namespace jh {

class MissingPrerequisite : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    SceneSpec scene;
    CarveOptions carve;
    SplitFractions split;
    std::uint64_t split_seed = 1;
    HourglassConfig jekyll;  // Utterson always shares Jekyll's architecture
    HourglassConfig hyde;
    TrainConfig train;
    std::vector<double> thresholds = default_thresholds();
    std::int64_t panel_gutter = 2;
    std::filesystem::path workspace = "workspace";
};

// Strict: unknown keys and invalid values raise ConfigError.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);
void validate(const ExperimentConfig& config);

// Canonical form; the workspace path is left out so relocated runs hash the same.
nlohmann::json to_json(const ExperimentConfig& config);
nlohmann::json scene_to_json(const SceneSpec& spec);

// 16 hex digits of 64-bit FNV-1a over the canonical JSON dump.
std::string fnv1a_hex(const std::string& bytes);
std::string config_hash(const ExperimentConfig& config);
// Hash of the sections that determine the dataset (scene, carve, split).
std::string data_hash(const ExperimentConfig& config);

// scene seed = s, split seed = s + 1, training seed = s + 2.
void apply_seed(ExperimentConfig& config, std::uint64_t seed);

// Per-model initialisation seeds drawn from the training seed.
std::uint64_t model_seed(const TrainConfig& train, const std::string& model);

struct Dataset {
    std::vector<Sample> samples;
    SplitIndices split;

    std::vector<Sample> subset(const std::vector<std::size_t>& ids) const;
};

void cmd_generate(const ExperimentConfig& config, std::ostream& log);
// Throws MissingPrerequisite when the workspace holds no data for this config.
Dataset load_dataset(const ExperimentConfig& config);

enum class TrainMode { Unsupervised, Supervised };
TrainMode train_mode_from_string(const std::string& name);

RunRecord cmd_train(const ExperimentConfig& config, TrainMode mode, std::ostream& log);
Evaluation cmd_eval(const ExperimentConfig& config, std::ostream& log);
PanelGrid cmd_render(const ExperimentConfig& config, std::int64_t sample_id, std::ostream& log);

}  // namespace jh
