#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

#include "tabtune/tensor.hpp"

namespace tabtune {

enum class OptimizerKind { SGD, Adam, AdamW };

OptimizerKind parse_optimizer_kind(std::string_view name);
std::string_view optimizer_kind_name(OptimizerKind kind);

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t warmup_epochs = 0;
  /// Global gradient-norm clipping threshold; off when unset.
  std::optional<double> clip_norm;

  bool operator==(const OptimizerSpec&) const = default;
};

/// Applies OptimizerSpec updates to the trainable entries of a ParamStore.
/// Adam folds weight decay into the gradient (L2); AdamW decays the value
/// directly. Learning rate ramps linearly over the first
/// warmup_epochs × steps_per_epoch steps.
class Optimizer {
 public:
  Optimizer(OptimizerSpec spec, std::size_t steps_per_epoch);

  void step(ParamStore& store);

  /// Learning rate the next call to step() will use.
  double next_learning_rate() const;
  std::size_t steps_taken() const noexcept { return steps_; }
  std::size_t warmup_steps() const noexcept { return warmup_steps_; }
  const OptimizerSpec& spec() const noexcept { return spec_; }

 private:
  OptimizerSpec spec_;
  std::size_t warmup_steps_;
  std::size_t steps_ = 0;
};

}  // namespace tabtune
