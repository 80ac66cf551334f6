#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tabtune/autodiff.hpp"
#include "tabtune/matrix.hpp"
#include "tabtune/rng.hpp"
#include "tabtune/tensor.hpp"

namespace tabtune {

/// Rows of a strategy's hyperparameter table, in declaration order.
using HyperDefaults = std::vector<std::pair<std::string, std::string>>;

enum class Support { Full, Experimental, None };

/// The adaptation regimes a model can be asked for. Inference is zero-shot
/// for in-context models and the model's own fitting routine for baselines.
enum class StrategyKey { Inference, Sft, Meta, PeftSft, PeftMeta };

std::string_view strategy_key_name(StrategyKey key);
char support_symbol(Support s);

struct Capabilities {
  Support inference = Support::Full;
  Support sft = Support::None;
  Support meta = Support::None;
  Support peft_sft = Support::None;
  Support peft_meta = Support::None;

  Support of(StrategyKey key) const;
};

struct MiniIclArch {
  std::size_t d_model = 32;
  std::size_t n_heads = 2;
  std::size_t n_layers = 2;
  std::size_t k_max = 10;
  std::size_t mlp_hidden = 64;
  double softmax_temperature = 0.9;
};

struct ModelSpec {
  std::string name;
  std::string description;
  std::string profile;
  Capabilities capabilities;
  std::vector<std::pair<StrategyKey, HyperDefaults>> defaults;
  std::optional<MiniIclArch> arch;

  const HyperDefaults* defaults_for(StrategyKey key) const;
};

/// Support features and labels an in-context (or instance-based) model
/// conditions on at prediction time.
struct ContextState {
  FeatureMatrix features;
  std::vector<int> labels;

  bool operator==(const ContextState&) const = default;
};

struct LoraConfig {
  std::size_t rank = 8;
  double alpha = 16.0;
  double dropout = 0.05;

  double scaling() const { return alpha / static_cast<double>(rank); }
  bool operator==(const LoraConfig&) const = default;
};

enum class ModelKind { InContext, Parametric, Instance };

class Model {
 public:
  virtual ~Model() = default;

  virtual ModelKind kind() const = 0;
  virtual const std::string& name() const = 0;
  virtual std::unique_ptr<Model> clone() const = 0;

  std::size_t n_features() const noexcept { return n_features_; }
  std::size_t n_classes() const noexcept { return n_classes_; }

  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  void set_context(ContextState context);
  bool has_context() const noexcept { return context_.has_value(); }
  const ContextState& context() const;

  const std::optional<LoraConfig>& lora() const noexcept { return lora_; }
  void set_lora(std::optional<LoraConfig> cfg) { lora_ = std::move(cfg); }

  /// Weight matrices (rows = n_out, cols = n_in) eligible for adapters.
  virtual std::vector<std::string> lora_targets() const { return {}; }
  /// Parameters that stay trainable when adapters are attached.
  virtual std::vector<std::string> head_params() const { return {}; }

  /// Query-set loss for one episode; labels are contiguous within the
  /// episode and `n_valid` is the number of classes in it.
  virtual Var episode_loss(Tape& tape, const FeatureMatrix& support_x, std::span<const int> support_y,
                           const FeatureMatrix& query_x, std::span<const int> query_y, std::size_t n_valid,
                           bool train, Rng* rng);
  /// Supervised loss on a plain batch (parametric models).
  virtual Var batch_loss(Tape& tape, const FeatureMatrix& x, std::span<const int> y, bool train, Rng* rng);

  /// Probabilities over n_classes() for each row of `x`.
  virtual Tensor predict_proba(const FeatureMatrix& x) const = 0;

 protected:
  Model(std::size_t n_features, std::size_t n_classes) : n_features_(n_features), n_classes_(n_classes) {}
  Model(const Model&) = default;

  ParamStore params_;
  std::optional<ContextState> context_;
  std::optional<LoraConfig> lora_;

 private:
  std::size_t n_features_;
  std::size_t n_classes_;
};

/// Dense layer product x·Wᵀ, plus the low-rank adapter path when the store
/// holds `<weight>.lora_down` / `<weight>.lora_up`.
Var lora_linear(Tape& tape, Var x, ParamStore& store, const std::string& weight, const std::optional<LoraConfig>& cfg,
                bool train, Rng* rng);
Var lora_linear(Tape& tape, Var x, const ParamStore& store, const std::string& weight,
                const std::optional<LoraConfig>& cfg, bool train, Rng* rng);

/// Reference evaluation of h = x·Wᵀ + (alpha/r)·drop(x·downᵀ)·upᵀ on a row
/// batch x (n×n_in). Dropout (inverted, rate cfg.dropout) applies only in
/// train mode.
Tensor lora_forward(const Tensor& weight, const Tensor& down, const Tensor& up, const LoraConfig& cfg, const Tensor& x,
                    bool train, Rng& rng);

enum class PeftOutcome { Attached, Fallback };

struct PeftReport {
  PeftOutcome outcome = PeftOutcome::Fallback;
  std::vector<std::string> targets;
  std::size_t trainable_params = 0;
  std::size_t total_params = 0;

  double trainable_fraction() const {
    return total_params == 0 ? 0.0 : static_cast<double>(trainable_params) / static_cast<double>(total_params);
  }
};

/// Injects rank-r adapters (down ~ N(0, 0.02²), up = 0) on every eligible
/// projection, freezes the base weights and keeps head parameters
/// trainable. Models without eligible layers are left untouched and the
/// report says Fallback.
PeftReport attach_lora(Model& model, const LoraConfig& cfg, std::uint64_t seed);

/// Closed-form trainable count after attach_lora: Σ r·(n_in + n_out) over
/// targets plus head parameters.
std::size_t lora_trainable_closed_form(const Model& model, const LoraConfig& cfg);

// Registry -----------------------------------------------------------------

const std::vector<ModelSpec>& model_registry();
/// Throws UnknownModel.
const ModelSpec& find_model_spec(std::string_view name);

/// Fresh model with seeded initial parameters.
std::unique_ptr<Model> create_model(std::string_view name, std::size_t n_features, std::size_t n_classes,
                                    std::uint64_t seed);

/// Published defaults for the pretrained tabular foundation models this
/// library's strategies are modelled on. Documentation only; none of these
/// names can be instantiated.
struct ReferenceModelEntry {
  std::string name;
  std::string paradigm;
  Capabilities capabilities;
  std::vector<std::pair<StrategyKey, std::string>> defaults;
};
const std::vector<ReferenceModelEntry>& reference_models();

}  // namespace tabtune
