#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tabtune/dataset.hpp"
#include "tabtune/metrics.hpp"
#include "tabtune/pipeline.hpp"

namespace tabtune {

/// 1-based ranks, best first; tied values share the mean of the positions
/// they cover. `ascending` ranks the smallest value best.
std::vector<double> average_ranks(std::span<const double> values, bool ascending = false);

/// Keys run() can rank by and whether smaller is better for each.
const std::map<std::string, bool>& rankable_metrics();
/// Throws InvalidArgument for keys outside rankable_metrics().
bool rank_ascending(const std::string& metric);

/// Short label of a config's strategy block: inference, sft,
/// meta-learning, peft-sft or peft-meta-learning.
std::string strategy_label(const PipelineConfig& cfg);

struct LeaderboardEntry {
  std::string display_name;
  PipelineConfig config;
  MetricsReport report;
  double fit_seconds = 0.0;
  double predict_seconds = 0.0;
  /// Absent when the entry failed or could not produce the ranking metric.
  std::optional<double> rank;
  std::string error;
};

class Leaderboard {
 public:
  explicit Leaderboard(std::uint64_t seed = 0) : seed_(seed) {}

  /// Appends a configuration; repeated base names get "#2", "#3", ...
  /// Returns the display name. Throws UnknownModel / UnsupportedStrategy.
  std::string add_model(const std::string& model_name, TuningStrategy strategy,
                        FinetuneMode mode = FinetuneMode::Sft, std::map<std::string, std::string> tuning_params = {});
  std::string add(PipelineConfig cfg, std::string display_name = {});

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<std::pair<std::string, PipelineConfig>>& entries() const noexcept { return entries_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Trains and scores every entry on the same split, `threads` at a time
  /// (0 = hardware concurrency). Ranked entries come first, best first;
  /// output does not depend on insertion order or thread count.
  std::vector<LeaderboardEntry> run(const Dataset& train, const Dataset& test, const std::string& rank_by = "accuracy",
                                    std::size_t threads = 1) const;

 private:
  std::uint64_t seed_;
  std::vector<std::pair<std::string, PipelineConfig>> entries_;
};

struct SuiteDataset {
  std::string name;
  std::filesystem::path path;
  std::string target;
  SplitSpec split;
};

/// Manifest sections, one per dataset:
///
///   [dataset.iris]
///   path = data/iris.csv      # relative to the manifest
///   target = species
///   test_fraction = 0.25
///   stratified = true
///   seed = 0
struct SuiteManifest {
  std::vector<SuiteDataset> datasets;

  static SuiteManifest parse(const ConfigFile& file, const std::filesystem::path& base_dir = {});
  static SuiteManifest load(const std::filesystem::path& path);
};

/// Benchmark configurations file: one `[config.NAME]` section per entry
/// holding PipelineConfig keys. Returns a board seeded with `seed`.
Leaderboard load_suite_configs(const ConfigFile& file, std::uint64_t seed);

struct SuiteCell {
  std::optional<double> metric;
  std::optional<double> accuracy;
  std::optional<double> f1;
  std::optional<double> rank;
  std::string error;
};

struct SuiteResult {
  std::string rank_by;
  std::vector<std::string> models;    // display names, sorted
  std::vector<std::string> strategies;  // parallel to models
  std::vector<std::string> datasets;  // manifest order
  std::vector<std::vector<SuiteCell>> cells;  // [model][dataset]
  /// Datasets on which every model produced the ranking metric.
  std::vector<std::string> common_datasets;
  std::map<std::string, double> mean_rank;
  std::map<std::string, double> mean_accuracy;
  std::map<std::string, double> mean_f1;

  std::string results_csv() const;
  /// Grouped by strategy block; the first line carries `timestamp`.
  std::string summary_text(const std::string& timestamp) const;
};

/// Mean ranks and means over the common subset of a finished table.
void aggregate_suite(SuiteResult& result);

SuiteResult run_suite(const Leaderboard& board, const std::vector<std::pair<std::string, std::pair<Dataset, Dataset>>>& splits,
                      const std::string& rank_by = "accuracy", std::size_t threads = 1);
SuiteResult run_suite(const Leaderboard& board, const SuiteManifest& manifest, const std::string& rank_by = "accuracy",
                      std::size_t threads = 1);

}  // namespace tabtune
