#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tabtune/tensor.hpp"

namespace tabtune {

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> row);

struct Prediction {
  Tensor proba;  // rows × K
  std::vector<int> labels;

  static Prediction from_proba(Tensor proba);
  std::size_t rows() const noexcept { return labels.size(); }
  std::size_t n_classes() const noexcept { return proba.cols(); }
};

struct MetricsReport {
  std::map<std::string, double> values;
  std::map<std::string, std::string> metadata;

  bool has(const std::string& key) const { return values.contains(key); }
  /// Throws MetricUnavailable when absent.
  double at(const std::string& key) const;
  void merge(const MetricsReport& other);
};

/// Mann-Whitney AUC with midranks. Requires both classes present.
double binary_auc(std::span<const double> scores, std::span<const int> is_positive);

/// accuracy, precision, recall, f1_score (support-weighted, 0/0 -> 0) and
/// roc_auc_score (binary: class-1 scores; multiclass: support-weighted
/// one-vs-rest over classes present in y). AUC is absent when undefined.
MetricsReport evaluate(const Prediction& pred, std::span<const int> y);

/// expected_calibration_error, maximum_calibration_error over equal-width
/// bins on (0,1] with left-open intervals, and brier_score_loss.
MetricsReport evaluate_calibration(const Prediction& pred, std::span<const int> y, std::size_t n_bins = 15);

/// statistical_parity_difference, equalized_odds_difference and
/// equalized_opportunity_difference as the largest pairwise gap across
/// groups. Metrics needing a rate some group cannot provide are absent and
/// listed under metadata "undefined".
MetricsReport evaluate_fairness(const Prediction& pred, std::span<const int> y, std::span<const int> groups,
                                int positive_class = 1);

}  // namespace tabtune
