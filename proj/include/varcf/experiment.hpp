#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "varcf/data.hpp"
#include "varcf/metrics.hpp"
#include "varcf/model.hpp"

namespace varcf {

enum class ReportFormat { Json, Csv };

// Throws Usage listing the valid formats.
ReportFormat parse_report_format(std::string_view name);

// Per-dataset epoch budgets reused from the reference fitting runs; 10 for unknown corpora.
std::size_t default_epochs(Architecture arch, std::string_view dataset);

std::vector<std::size_t> default_top_n_sweep();

struct ExperimentSpec {
    std::filesystem::path dataset_path;
    std::string dataset_name;  // registry key; defaults to the file stem
    std::optional<double> threshold;

    std::vector<Architecture> architectures{Architecture::VDeepMF};
    // Dimensions, batch size, learning rate and sample count shared by all architectures.
    ModelConfig model = default_config(Architecture::VDeepMF);
    std::optional<std::size_t> epochs;  // unset: default_epochs per architecture

    double split_ratio = 0.8;
    std::uint64_t split_seed = 42;
    std::uint64_t init_seed = 42;
    std::uint64_t sample_seed = 42;

    std::vector<std::size_t> top_n = default_top_n_sweep();
    // Wall-clock fit time and the run timestamp; off makes the report a pure function of the spec.
    bool record_timing = true;

    std::filesystem::path report_path;
    ReportFormat report_format = ReportFormat::Json;
};

void validate(const ExperimentSpec& spec);

// Reads a nested JSON config; keys absent from the file keep the values in `base`.
ExperimentSpec spec_from_json(const nlohmann::json& j, ExperimentSpec base = {});
ExperimentSpec load_spec(const std::filesystem::path& path, ExperimentSpec base = {});

struct ArchitectureResult {
    Architecture architecture = Architecture::VDeepMF;
    ModelConfig config;
    std::size_t fit_epochs = 0;
    std::optional<double> fit_seconds;
    std::vector<double> epoch_losses;
    double mae = 0.0;
    double mse = 0.0;
    double r2 = 0.0;
    std::vector<RankingPoint> curve;

    friend bool operator==(const ArchitectureResult&, const ArchitectureResult&) = default;
};

struct ReportMetadata {
    std::string dataset;
    std::string corpus_checksum;
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::size_t num_ratings = 0;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::size_t cold_start_test_users = 0;  // test users with no training ratings
    double threshold = 0.0;
    RatingScale scale;
    double split_ratio = 0.0;
    std::uint64_t split_seed = 0;
    std::uint64_t init_seed = 0;
    std::uint64_t sample_seed = 0;
    std::size_t n_prediction_samples = 0;
    std::string candidate_set = "test-items-only";
    std::string duplicate_policy = "keep-last";
    std::string loss = "mse";
    std::optional<std::string> timestamp;

    friend bool operator==(const ReportMetadata&, const ReportMetadata&) = default;
};

inline constexpr int kReportSchemaMajor = 1;
inline constexpr int kReportSchemaMinor = 0;

struct MetricsReport {
    int schema_major = kReportSchemaMajor;
    int schema_minor = kReportSchemaMinor;
    ReportMetadata metadata;
    std::vector<ArchitectureResult> results;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Model config for one architecture of the spec, sized to the corpus.
ModelConfig architecture_config(const ExperimentSpec& spec, Architecture arch, const RatingsDataset& corpus);

// Scores a trained model on a test split: averaged, clamped predictions, then every metric.
ArchitectureResult evaluate_model(const ModelParams& params, const ModelConfig& config,
                                  const RatingsDataset& test, std::span<const std::size_t> top_n,
                                  double threshold);

MetricsReport run_experiment(const ExperimentSpec& spec);
// Same pipeline on an already loaded corpus.
MetricsReport run_experiment(const ExperimentSpec& spec, const RatingsDataset& corpus);

nlohmann::ordered_json report_to_json(const MetricsReport& report);
// Rejects reports whose schema major version is not kReportSchemaMajor.
MetricsReport report_from_json(const nlohmann::json& j);

std::string report_to_csv(const MetricsReport& report);
void emit_report(const MetricsReport& report, const std::filesystem::path& path, ReportFormat format);

}  // namespace varcf
