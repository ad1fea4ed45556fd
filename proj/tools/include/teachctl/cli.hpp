#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "teach/simulator.hpp"

namespace teach::cli {

/// Inclusive "a..b" or a single integer.
std::vector<std::uint64_t> parse_seed_range(const std::string& text);
/// Comma-separated strategy names; an empty list is an error.
std::vector<StrategyKind> parse_strategy_list(const std::string& text);

/// Where the dataset comes from: a manifest on disk or the synthetic mixture.
struct DataSource {
  std::optional<std::filesystem::path> manifest;
  MixtureOptions mixture = default_benchmark();
  PrepareOptions prepare;
};

Dataset load_source(const DataSource& source);
nlohmann::json source_to_json(const DataSource& source);

/// "<version> (<git describe>)".
std::string version_string();

struct SimulateOutputs {
  std::string trials_csv;
  nlohmann::json curves;
  nlohmann::json summary;
  std::string table;
};

/// Renders every artifact of a finished experiment. `config` is embedded
/// verbatim in each of them.
SimulateOutputs render_simulation(std::span<const TrialResult> results,
                                  StrategyKind reference, const nlohmann::json& config);

struct TrialRow {
  std::string strategy;
  std::uint64_t seed = 0;
  double score = 0.0;
  double mean_ms = 0.0;
};

/// Reads trials.csv, skipping '#' comment lines.
std::vector<TrialRow> read_trials_csv(const std::filesystem::path& path);

struct ReportOutputs {
  std::string table;
  std::string curves_csv;
  nlohmann::json summary;
};

/// Aggregates a results directory (trials.csv, optional curves.json).
ReportOutputs render_report(const std::filesystem::path& results_dir,
                            StrategyKind reference = StrategyKind::Eer);

/// Fixed-width text with one row per strategy: trials, mean time, mean score, p-value.
std::string format_table(const nlohmann::json& summary);

/// Entry point of `teachctl`; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace teach::cli
