#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "prunecoder/model.hpp"
#include "prunecoder/train.hpp"

namespace prunecoder {

/// Strategy label for rows that were not pruned.
inline constexpr std::string_view kNoPruneLabel = "—";

/// One (model, strategy, dataset) result row.
struct EvalReport {
    std::string model;
    std::string strategy;  // "Top 6", "Middle 10", or kNoPruneLabel
    std::string dataset;
    double validation_accuracy = 0.0;  // percent
    double test_accuracy = 0.0;        // percent
    int num_layers = 0;
    std::int64_t total_params = 0;
    std::string group;  // rows sharing a group compete for the best-value flag

    bool operator==(const EvalReport&) const = default;
};

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);

/// Group used when a row leaves `group` empty: model plus the removal count of its strategy.
std::string effective_group(const EvalReport& r);

enum class ReportFormat { tsv, markdown };
ReportFormat parse_report_format(std::string_view name);

/// Two decimals, e.g. 92.18.
std::string format_percent(double value);

/// Test-accuracy table: one row per (model, strategy), one column per dataset, then layer
/// count and total parameters. Within each group the best value per dataset is flagged
/// (bold in markdown, trailing '*' in TSV); ties are all flagged.
std::string comparison_report(std::span<const EvalReport> rows, ReportFormat format);

/// Validation and testing accuracy for one dataset, flagged per group the same way.
std::string dataset_report(std::span<const EvalReport> rows, const std::string& dataset, ReportFormat format);

void write_reports_jsonl(const std::filesystem::path& path, std::span<const EvalReport> rows);
std::vector<EvalReport> read_reports_jsonl(const std::filesystem::path& path);

/// Appends {"config_hash", "seed", "command", "metrics"} plus `extra` fields to a JSONL log.
void append_experiment_log(const std::filesystem::path& path, const std::string& command, const nlohmann::json& metrics,
                           const ModelConfig& model_config, const TrainConfig& train_config,
                           const nlohmann::json& extra = nlohmann::json::object());

/// Log entry for one protocol row.
void append_experiment_log(const std::filesystem::path& path, const EvalReport& row, const ModelConfig& model_config,
                           const TrainConfig& train_config);

/// Stable hash of the model and training configuration.
std::string config_hash(const ModelConfig& model_config, const TrainConfig& train_config);

}  // namespace prunecoder
