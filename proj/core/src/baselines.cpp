#include "tabtune/baselines.hpp"

#include <cmath>

#include "tabtune/error.hpp"
#include "tabtune/neighbors.hpp"

namespace tabtune {

LogisticRegression::LogisticRegression(std::size_t n_features, std::size_t n_classes, std::uint64_t seed)
    : Model(n_features, n_classes) {
  if (n_features == 0) raise(ErrorCode::ShapeMismatch, "logistic regression needs at least one feature");
  Rng rng(derive_seed(seed, "logistic-init"));
  params_.add("weight", random_normal({n_classes, n_features}, 0.01, rng));
  params_.add("bias", Tensor::vector(n_classes));
}

const std::string& LogisticRegression::name() const {
  static const std::string kName = "LogisticRegression";
  return kName;
}

Var LogisticRegression::logits(Tape& tape, const FeatureMatrix& x) {
  if (x.cols != n_features()) raise(ErrorCode::ShapeMismatch, "feature width differs from the fitted width");
  Var in = tape.constant(Tensor({x.rows, x.cols}, x.data));
  return ops::add_row(ops::linear(in, tape.param(params_, "weight")), tape.param(params_, "bias"));
}

Var LogisticRegression::batch_loss(Tape& tape, const FeatureMatrix& x, std::span<const int> y, bool, Rng*) {
  if (x.rows != y.size()) raise(ErrorCode::LengthMismatch, "batch rows differ from label count");
  return ops::cross_entropy(logits(tape, x), y, {});
}

Tensor LogisticRegression::predict_proba(const FeatureMatrix& x) const {
  if (x.cols != n_features()) raise(ErrorCode::ShapeMismatch, "feature width differs from the fitted width");
  const Tensor& w = params_.at("weight").value;
  const Tensor& b = params_.at("bias").value;
  Tensor z = Tensor::matrix(x.rows, n_classes());
  for (std::size_t i = 0; i < x.rows; ++i) {
    auto row = x.row(i);
    for (std::size_t c = 0; c < n_classes(); ++c) {
      double s = b[c];
      for (std::size_t f = 0; f < x.cols; ++f) s += w.at(c, f) * row[f];
      z.at(i, c) = s;
    }
  }
  return softmax_rows(z);
}

std::size_t LogisticRegression::fit_native(const FeatureMatrix& x, std::span<const int> y) {
  if (x.rows == 0) raise(ErrorCode::EmptyTrainingSet, "logistic regression needs training rows");
  OptimizerSpec spec;
  spec.kind = OptimizerKind::AdamW;
  spec.learning_rate = kNativeLearningRate;
  spec.weight_decay = kNativeWeightDecay;
  Optimizer opt(spec, 1);
  for (std::size_t s = 0; s < kNativeSteps; ++s) {
    Tape tape;
    tape.backward(batch_loss(tape, x, y, true, nullptr));
    opt.step(params_);
  }
  return kNativeSteps;
}

KnnClassifier::KnnClassifier(std::size_t n_features, std::size_t n_classes, std::size_t k)
    : Model(n_features, n_classes), k_(k) {
  if (k_ == 0) raise(ErrorCode::InvalidConfig, "k must be at least 1");
}

const std::string& KnnClassifier::name() const {
  static const std::string kName = "KNN";
  return kName;
}

Tensor KnnClassifier::predict_proba(const FeatureMatrix& x) const {
  const ContextState& ctx = context();
  if (ctx.features.rows == 0) raise(ErrorCode::EmptyTrainingSet, "k-NN has no stored training rows");
  if (x.cols != ctx.features.cols) raise(ErrorCode::ShapeMismatch, "feature width differs from the fitted width");
  const std::size_t k = std::min(k_, ctx.features.rows);
  Tensor out = Tensor::matrix(x.rows, n_classes());
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j : nearest_neighbors(ctx.features, x.row(i), k))
      out.at(i, static_cast<std::size_t>(ctx.labels[j])) += 1.0 / static_cast<double>(k);
  }
  return out;
}

}  // namespace tabtune
