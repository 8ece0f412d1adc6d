#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "perturbench/attacks.hpp"
#include "perturbench/defenses.hpp"
#include "perturbench/models.hpp"
#include "perturbench/training.hpp"

namespace perturbench {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct DatasetConfig {
    /// Either a procedural toy set or a labels CSV of user images.
    std::optional<std::filesystem::path> labels_csv;
    std::uint64_t seed = 7;
    int n_train = 3000;
    int n_test = 1000;
};

struct ModelConfig {
    std::string name;
    ModelKind kind = ModelKind::TinyCnn;
    /// Loaded when present; otherwise the model is trained from `train`.
    std::optional<std::filesystem::path> checkpoint;
    TrainConfig train;
    std::uint64_t init_seed = 1;
};

struct AttackEntry {
    AttackSpec spec;
    /// Overrides ExperimentConfig::sample_count for this attack (first k samples).
    std::optional<int> sample_count;
};

struct EotConfig {
    std::vector<DefenseKind> members;
    int mc_samples = 8;
    double epsilon = 4.0 / 255.0;
    int steps = 10;
    double eps_step = 0.0;  // 0 selects epsilon / 10
};

struct ExperimentConfig {
    std::vector<ModelConfig> models;
    std::vector<AttackEntry> attacks;
    /// All six defenses when the config omits the key.
    std::vector<DefenseSpec> defenses;
    std::optional<EotConfig> eot;
    int sample_count = 200;
    std::uint64_t master_seed = 0;
    DatasetConfig dataset;
    /// Grad-CAM / rollout / feature-difference maps for the first sample of each cell.
    bool saliency_maps = true;

    void validate() const;
};

/// Accepts a number or "a/b" (e.g. "8/255").
double parse_epsilon_text(const std::string& text);

/// Training defaults that reach the toy-set accuracy gate for each model.
TrainConfig default_train_config(ModelKind kind);

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Parses one attack object, e.g. {"kind": "pgd", "norm": "l2", "epsilon": 0.5}.
AttackEntry parse_attack_json(const std::string& json_text);

}  // namespace perturbench
