#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include "tabtune/model.hpp"
#include "tabtune/optimizer.hpp"

namespace tabtune {

/// Multinomial logistic regression: softmax(x·Wᵀ + b).
class LogisticRegression final : public Model {
 public:
  static constexpr std::size_t kNativeSteps = 500;
  static constexpr double kNativeLearningRate = 0.05;
  static constexpr double kNativeWeightDecay = 1e-4;

  LogisticRegression(std::size_t n_features, std::size_t n_classes, std::uint64_t seed);

  ModelKind kind() const override { return ModelKind::Parametric; }
  const std::string& name() const override;
  std::unique_ptr<Model> clone() const override { return std::make_unique<LogisticRegression>(*this); }

  std::vector<std::string> head_params() const override { return {"weight", "bias"}; }

  Var logits(Tape& tape, const FeatureMatrix& x);
  Var batch_loss(Tape& tape, const FeatureMatrix& x, std::span<const int> y, bool train, Rng* rng) override;
  Tensor predict_proba(const FeatureMatrix& x) const override;

  /// Full-batch AdamW for kNativeSteps steps. Returns the step count.
  std::size_t fit_native(const FeatureMatrix& x, std::span<const int> y);
};

/// k-nearest-neighbour classifier; probabilities are neighbour class
/// frequencies over the stored training rows.
class KnnClassifier final : public Model {
 public:
  KnnClassifier(std::size_t n_features, std::size_t n_classes, std::size_t k = 5);

  ModelKind kind() const override { return ModelKind::Instance; }
  const std::string& name() const override;
  std::unique_ptr<Model> clone() const override { return std::make_unique<KnnClassifier>(*this); }

  std::size_t k() const noexcept { return k_; }
  Tensor predict_proba(const FeatureMatrix& x) const override;

 private:
  std::size_t k_;
};

}  // namespace tabtune
