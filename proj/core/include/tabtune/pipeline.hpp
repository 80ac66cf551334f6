#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tabtune/config.hpp"
#include "tabtune/dataset.hpp"
#include "tabtune/metrics.hpp"
#include "tabtune/model.hpp"
#include "tabtune/preprocess.hpp"
#include "tabtune/resample.hpp"
#include "tabtune/tuning.hpp"

namespace tabtune {

struct PipelineConfig {
  std::string model_name = "MiniICL";
  TuningStrategy strategy = TuningStrategy::Inference;
  FinetuneMode mode = FinetuneMode::Sft;
  /// Overrides applied on top of the registry defaults, keyed as in
  /// apply_tuning_param.
  std::map<std::string, std::string> tuning_params;
  ResampleSpec sampling;
  std::uint64_t seed = 0;
  /// Raw columns removed before preprocessing (e.g. a sensitive attribute).
  std::vector<std::string> exclude_columns;

  /// Registry defaults plus overrides, seeded from `seed`.
  TuningConfig resolved_tuning() const;
  /// Throws UnknownModel / UnsupportedStrategy / InvalidConfig.
  void validate() const;

  /// Keys: model_name, tuning_strategy, tuning_params.*, sampling.method,
  /// sampling.k_neighbors, seed, exclude_columns (comma separated).
  static PipelineConfig from_config(const ConfigFile& file);
  ConfigFile to_config() const;

  bool operator==(const PipelineConfig&) const = default;
};

struct PipelineState {
  PipelineConfig config;
  std::string target_column;
  std::vector<std::string> class_names;
  PreprocessorState preprocessor;
  std::shared_ptr<const Model> model;
  FitMetadata metadata;

  /// Options for loading held-out CSVs with the training column kinds.
  CsvOptions csv_options(bool require_target) const;
};

PipelineState fit_pipeline(const PipelineConfig& cfg, const Dataset& train, const std::string& target_column = "");

/// Train-fitted transform of held-out data (excluded columns dropped first).
FeatureMatrix transform_features(const PipelineState& state, const Dataset& data);

Prediction predict_proba(const PipelineState& state, const Dataset& data);
std::vector<int> predict(const PipelineState& state, const Dataset& data);

/// Held-out labels re-expressed against the training class list.
std::vector<int> aligned_target(const PipelineState& state, const Dataset& data);

MetricsReport evaluate(const PipelineState& state, const Dataset& data);
MetricsReport evaluate_calibration(const PipelineState& state, const Dataset& data, std::size_t n_bins = 15);
/// Groups are the raw values of `sensitive_column` in `data`.
MetricsReport evaluate_fairness(const PipelineState& state, const Dataset& data, const std::string& sensitive_column,
                                int positive_class = 1);

std::vector<std::uint8_t> serialize(const PipelineState& state);
PipelineState deserialize(std::span<const std::uint8_t> bytes);
void save(const PipelineState& state, const std::filesystem::path& path);
PipelineState load(const std::filesystem::path& path);

}  // namespace tabtune
