#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tabtune/model.hpp"

namespace tabtune {

/// Split-mask attention matrix over `n_support` support rows followed by
/// `n_query` query rows: support attends support; a query attends every
/// support row and itself.
AttentionMask split_mask(std::size_t n_support, std::size_t n_query);

/// Small in-context transformer. Rows are embedded linearly, support rows
/// add a label embedding and query rows a learned "unknown" vector, then
/// n_layers post-norm blocks of split-masked attention and MLP feed a head
/// with k_max output slots.
class MiniIcl final : public Model {
 public:
  MiniIcl(std::size_t n_features, std::size_t n_classes, MiniIclArch arch, std::uint64_t seed);

  ModelKind kind() const override { return ModelKind::InContext; }
  const std::string& name() const override;
  std::unique_ptr<Model> clone() const override { return std::make_unique<MiniIcl>(*this); }

  const MiniIclArch& arch() const noexcept { return arch_; }

  std::vector<std::string> lora_targets() const override;
  std::vector<std::string> head_params() const override;

  /// Logits for query rows over all k_max slots (slots >= n_valid are
  /// masked only by the loss / softmax).
  Var forward(Tape& tape, const FeatureMatrix& support_x, std::span<const int> support_y,
              const FeatureMatrix& query_x, bool train, Rng* rng);

  Var episode_loss(Tape& tape, const FeatureMatrix& support_x, std::span<const int> support_y,
                   const FeatureMatrix& query_x, std::span<const int> query_y, std::size_t n_valid, bool train,
                   Rng* rng) override;

  /// Query logits restricted to the first `n_valid` slots, evaluated
  /// without recording gradients.
  Tensor query_logits(const FeatureMatrix& support_x, std::span<const int> support_y, const FeatureMatrix& query_x,
                      std::size_t n_valid) const;

  /// Uses the stored context as support; logits are divided by the
  /// softmax temperature before normalising.
  Tensor predict_proba(const FeatureMatrix& x) const override;

 private:
  MiniIclArch arch_;
};

}  // namespace tabtune
