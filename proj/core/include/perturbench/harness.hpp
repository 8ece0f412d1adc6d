#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "perturbench/analysis.hpp"
#include "perturbench/config.hpp"
#include "perturbench/dataset.hpp"
#include "perturbench/metrics.hpp"
#include "perturbench/models.hpp"

namespace perturbench {

struct ExperimentData {
    LabeledSet train;  // empty for user-supplied image directories
    LabeledSet test;
};

ExperimentData load_experiment_data(const DatasetConfig& config);

struct PreparedModel {
    std::string name;
    std::unique_ptr<TrainableClassifier> model;
    double test_accuracy = 0.0;
    /// Where the weights came from: "checkpoint", "cache" or "trained".
    std::string origin;
};

struct PrepareOptions {
    /// Trained weights are stored here and reused when the same model, training
    /// config and dataset come up again.
    std::optional<std::filesystem::path> cache_dir;
    std::ostream* log = nullptr;
};

/// File name a trained model is cached under; a pure function of everything
/// that determines its weights.
std::string model_cache_name(const ModelConfig& model, const DatasetConfig& dataset);

PreparedModel prepare_model(const ModelConfig& config, const DatasetConfig& dataset, const ExperimentData& data,
                            const PrepareOptions& options = {});
std::vector<PreparedModel> prepare_models(const ExperimentConfig& config, const ExperimentData& data,
                                          const PrepareOptions& options = {});

struct SampleSet {
    LabeledSet samples;
    std::vector<std::size_t> test_indices;  // position of each sample in the test set
};

/// The first n test images (in order) that every model classifies correctly.
SampleSet select_clean_correct(const std::vector<const Classifier*>& models, const LabeledSet& test, int n);

struct CellReport {
    std::string model;
    std::string attack;  // AttackSpec::label()
    std::optional<double> epsilon;
    int samples = 0;
    double asr = 0.0;
    /// Means over samples; psnr averages the finite values (kPsnrIdentical when none are).
    QualityReport quality;
    double spread_radius = 0.0;
    /// Aligned with EvalReport::defense_names; entry 0 is the undefended error.
    std::vector<double> top1_error;
    double mean_queries = 0.0;
    double attack_seconds = 0.0;
    double defense_seconds = 0.0;
    /// Mean squared-DCT spectrum of the perturbations.
    SpectrumHeatmap mean_spectrum;
    /// Fooling rate on the crafting set (UAP only).
    std::optional<double> uap_fooling_rate;
};

struct EvalReport {
    std::uint64_t master_seed = 0;
    int sample_count = 0;
    int feature_channel = 0;
    /// "none" followed by one name per configured defense.
    std::vector<std::string> defense_names;
    std::vector<CellReport> cells;
    std::vector<std::pair<std::string, double>> model_accuracy;
};

struct GridOptions {
    /// When set, per-cell spectra and first-sample saliency maps go here.
    std::optional<std::filesystem::path> heatmap_dir;
    /// Called after every finished cell with the report so far.
    std::function<void(const EvalReport&)> on_cell;
    std::ostream* log = nullptr;
};

/// Seed handed to the attack of test sample `index`.
std::uint64_t sample_seed(std::uint64_t master_seed, std::size_t index);

/// Column names for the configured defenses; repeated kinds get a numeric suffix.
std::vector<std::string> defense_column_names(const std::vector<DefenseSpec>& defenses);

/// Short cell identifier used for heatmap file names, e.g. "pgd_linf_e8".
std::string attack_tag(const AttackSpec& spec);

CellReport run_cell(const PreparedModel& model, const AttackEntry& attack, const SampleSet& samples,
                    const std::vector<DefenseSpec>& defenses, std::uint64_t master_seed,
                    const GridOptions& options = {}, int feature_channel = 0);

EvalReport run_grid(const ExperimentConfig& config, const std::vector<PreparedModel>& models,
                    const SampleSet& samples, const GridOptions& options = {});

struct TransferMatrix {
    std::vector<std::string> models;
    std::string attack;
    /// asr[i][j]: fraction of source-i adversarials misclassified by target j.
    std::vector<std::vector<double>> asr;
};

TransferMatrix transfer_matrix(const std::vector<PreparedModel>& models, const AttackSpec& spec,
                               const SampleSet& samples, std::uint64_t master_seed);

struct EotModelReport {
    std::string model;
    /// Per member: top-1 error of defended plain-PGD and EOT-PGD adversarials.
    std::vector<double> plain_error;
    std::vector<double> eot_error;
    double plain_mean = 0.0;
    double eot_mean = 0.0;
};

struct EotReport {
    std::vector<std::string> members;
    int mc_samples = 0;
    double epsilon = 0.0;
    int steps = 0;
    int samples = 0;
    std::vector<EotModelReport> models;
};

EotReport run_eot_experiment(const EotConfig& config, const std::vector<PreparedModel>& models,
                             const SampleSet& samples, std::uint64_t master_seed);

/// Numbers are written with 12 significant digits; infinite PSNR is "inf".
std::string format_number(double value);

void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
void write_report_json(const EvalReport& report, const std::filesystem::path& path);
void write_transfer_csv(const TransferMatrix& matrix, const std::filesystem::path& path);
void write_transfer_json(const TransferMatrix& matrix, const std::filesystem::path& path);
void write_eot_csv(const EotReport& report, const std::filesystem::path& path);
void write_eot_json(const EotReport& report, const std::filesystem::path& path);

/// Writes through a temporary file and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace perturbench
