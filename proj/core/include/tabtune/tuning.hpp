#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabtune/matrix.hpp"
#include "tabtune/model.hpp"
#include "tabtune/optimizer.hpp"
#include "tabtune/rng.hpp"

namespace tabtune {

enum class TuningStrategy { Inference, Finetune, Peft };
enum class FinetuneMode { Sft, MetaLearning };

TuningStrategy parse_tuning_strategy(std::string_view name);
std::string_view tuning_strategy_name(TuningStrategy s);
FinetuneMode parse_finetune_mode(std::string_view name);
std::string_view finetune_mode_name(FinetuneMode m);

struct TuningConfig {
  TuningStrategy strategy = TuningStrategy::Inference;
  FinetuneMode finetune_mode = FinetuneMode::Sft;
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  std::size_t support_size = 48;
  std::size_t query_size = 32;
  std::size_t n_episodes = 1000;
  /// When set, an SFT pseudo-episode uses this fraction of the batch as
  /// query rows instead of the half split.
  std::optional<double> query_set_ratio;
  OptimizerSpec optimizer;
  LoraConfig lora;
  std::uint64_t seed = 0;

  bool operator==(const TuningConfig&) const = default;
};

/// Strategy key the config requests (inference, sft, meta, peft_sft, peft_meta).
StrategyKey strategy_key(const TuningConfig& cfg);

/// Sets one tuning parameter from its textual form. Keys are the names used
/// under `tuning_params.` in config files (epochs, learning_rate,
/// peft_config.r, ...). Unknown keys raise InvalidConfig.
void apply_tuning_param(TuningConfig& cfg, std::string_view key, std::string_view value);

/// Every key apply_tuning_param accepts.
const std::vector<std::string>& tuning_param_keys();

/// Config seeded with the registry defaults of `spec` for the requested
/// strategy and mode.
TuningConfig default_tuning_config(const ModelSpec& spec, TuningStrategy strategy, FinetuneMode mode);

struct Episode {
  std::vector<std::size_t> support;
  std::vector<std::size_t> query;
  /// Original class -> contiguous index, ascending in original class.
  std::map<int, int> label_map;

  std::vector<int> remap(std::span<const int> labels, std::span<const std::size_t> rows) const;
};

/// Draws S support and Q query rows uniformly without replacement. Returns
/// nullopt (a skip) when some query label is absent from the support set.
/// Raises InfeasibleEpisode when S + Q exceeds the row count.
std::optional<Episode> sample_episode(std::span<const int> labels, std::size_t support_size, std::size_t query_size,
                                      Rng& rng);

/// Throws InvalidArgument describing the first violated invariant.
void validate_episode(const Episode& ep, std::span<const int> labels);

struct FitMetadata {
  std::string strategy;
  std::size_t optimizer_steps = 0;
  std::size_t skipped = 0;
  std::size_t executed = 0;
  std::optional<PeftReport> peft;
  double fit_seconds = 0.0;
  double final_loss = 0.0;
};

/// Stores (X, y) as context. Parameters are untouched.
FitMetadata fit_zero_shot(Model& model, const FeatureMatrix& x, std::span<const int> y);
FitMetadata train_sft(Model& model, const FeatureMatrix& x, std::span<const int> y, const TuningConfig& cfg);
FitMetadata train_meta(Model& model, const FeatureMatrix& x, std::span<const int> y, const TuningConfig& cfg);
FitMetadata train_peft(Model& model, const FeatureMatrix& x, std::span<const int> y, const TuningConfig& cfg);

/// Capability-checked dispatch. Inference on a parametric baseline runs
/// the baseline's own fitting routine.
FitMetadata tune(Model& model, const ModelSpec& spec, const FeatureMatrix& x, std::span<const int> y,
                 const TuningConfig& cfg);

}  // namespace tabtune
