#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "replanvlm/bench/suite.hpp"

namespace replanvlm::bench {

enum class ExportFormat { Text, Csv, Json };
std::optional<ExportFormat> export_format_from_string(const std::string& s);

/// Per-task rows plus an Average row; a table without rows is header only.
std::string to_text(const MetricsTable& m);
std::string to_csv(const MetricsTable& m);
nlohmann::json to_json(const MetricsTable& m);

/// Inverse of to_csv (the Average row is recomputed, not read).
MetricsTable metrics_from_csv(const std::string& csv, const std::string& label = "");
MetricsTable metrics_from_json(const nlohmann::json& j);

std::string render(const MetricsTable& m, ExportFormat f);
void export_metrics(const MetricsTable& m, ExportFormat f, const std::filesystem::path& path);

/// Method rows by task columns plus Average, success rates only.
std::string ablation_table(const AblationResult& r);

}  // namespace replanvlm::bench
