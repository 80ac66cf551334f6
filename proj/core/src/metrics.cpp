#include "tabtune/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "tabtune/error.hpp"

namespace tabtune {

std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

Prediction Prediction::from_proba(Tensor proba) {
  Prediction p;
  p.labels.resize(proba.rows());
  for (std::size_t i = 0; i < proba.rows(); ++i) p.labels[i] = static_cast<int>(argmax(proba.row(i)));
  p.proba = std::move(proba);
  return p;
}

double MetricsReport::at(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) raise(ErrorCode::MetricUnavailable, "metric '" + key + "' was not produced");
  return it->second;
}

void MetricsReport::merge(const MetricsReport& other) {
  for (const auto& [k, v] : other.values) values[k] = v;
  for (const auto& [k, v] : other.metadata) {
    auto it = metadata.find(k);
    if (k == "undefined" && it != metadata.end())
      it->second += "," + v;
    else
      metadata[k] = v;
  }
}

namespace {

void check_inputs(const Prediction& pred, std::span<const int> y) {
  if (pred.rows() != y.size() || pred.proba.rows() != y.size())
    raise(ErrorCode::LengthMismatch, "prediction rows differ from label count");
  if (y.empty()) raise(ErrorCode::InvalidArgument, "no rows to evaluate");
  const auto k = static_cast<int>(pred.n_classes());
  for (int v : y)
    if (v < 0 || v >= k) raise(ErrorCode::InvalidArgument, "label outside 0..K-1");
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : ",") + p;
  return out;
}

}  // namespace

double binary_auc(std::span<const double> scores, std::span<const int> is_positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (is_positive[order[t]]) {
        rank_sum += midrank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) raise(ErrorCode::MetricUnavailable, "AUC needs both classes present");
  const double pos = static_cast<double>(n_pos);
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * static_cast<double>(n_neg));
}

MetricsReport evaluate(const Prediction& pred, std::span<const int> y) {
  check_inputs(pred, y);
  const std::size_t n = y.size(), k = pred.n_classes();
  std::vector<double> tp(k, 0), predicted(k, 0), support(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = static_cast<std::size_t>(y[i]);
    const auto p = static_cast<std::size_t>(pred.labels[i]);
    support[t] += 1;
    predicted[p] += 1;
    if (t == p) {
      tp[t] += 1;
      ++correct;
    }
  }
  MetricsReport r;
  const double nn = static_cast<double>(n);
  r.values["accuracy"] = static_cast<double>(correct) / nn;
  double precision = 0, recall = 0, f1 = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double pc = predicted[c] > 0 ? tp[c] / predicted[c] : 0.0;
    const double rc = support[c] > 0 ? tp[c] / support[c] : 0.0;
    const double fc = pc + rc > 0 ? 2.0 * pc * rc / (pc + rc) : 0.0;
    const double w = support[c] / nn;
    precision += w * pc;
    recall += w * rc;
    f1 += w * fc;
  }
  r.values["precision"] = precision;
  r.values["recall"] = recall;
  r.values["f1_score"] = f1;

  std::vector<double> scores(n);
  std::vector<int> positive(n);
  if (k == 2) {
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = pred.proba.at(i, 1);
      positive[i] = y[i] == 1;
    }
    if (support[0] > 0 && support[1] > 0)
      r.values["roc_auc_score"] = binary_auc(scores, positive);
    else
      r.metadata["undefined"] = "roc_auc_score";
  } else {
    double auc = 0.0, weight = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (support[c] == 0 || support[c] == nn) continue;
      for (std::size_t i = 0; i < n; ++i) {
        scores[i] = pred.proba.at(i, c);
        positive[i] = static_cast<std::size_t>(y[i]) == c;
      }
      auc += support[c] * binary_auc(scores, positive);
      weight += support[c];
    }
    if (weight > 0)
      r.values["roc_auc_score"] = auc / weight;
    else
      r.metadata["undefined"] = "roc_auc_score";
  }
  return r;
}

MetricsReport evaluate_calibration(const Prediction& pred, std::span<const int> y, std::size_t n_bins) {
  check_inputs(pred, y);
  if (n_bins == 0) raise(ErrorCode::InvalidArgument, "n_bins must be at least 1");
  const std::size_t n = y.size(), k = pred.n_classes();
  const double nb = static_cast<double>(n_bins);
  std::vector<double> count(n_bins, 0), conf_sum(n_bins, 0), correct_sum(n_bins, 0);
  double brier = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = pred.proba.row(i);
    const double conf = row[static_cast<std::size_t>(pred.labels[i])];
    // Bin b covers (b/n, (b+1)/n]; confidence 0 joins the first bin.
    std::size_t b = conf <= 0.0 ? 0 : static_cast<std::size_t>(std::max(0.0, std::ceil(conf * nb) - 1.0));
    b = std::min(b, n_bins - 1);
    while (b > 0 && conf <= static_cast<double>(b) / nb) --b;
    while (b + 1 < n_bins && conf > static_cast<double>(b + 1) / nb) ++b;
    count[b] += 1;
    conf_sum[b] += conf;
    correct_sum[b] += pred.labels[i] == y[i] ? 1.0 : 0.0;
    if (k == 2) {
      const double d = row[1] - (y[i] == 1 ? 1.0 : 0.0);
      brier += d * d;
    } else {
      for (std::size_t c = 0; c < k; ++c) {
        const double d = row[c] - (static_cast<std::size_t>(y[i]) == c ? 1.0 : 0.0);
        brier += d * d;
      }
    }
  }
  double ece = 0.0, mce = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (count[b] == 0) continue;
    const double gap = std::abs(correct_sum[b] / count[b] - conf_sum[b] / count[b]);
    ece += count[b] / static_cast<double>(n) * gap;
    mce = std::max(mce, gap);
  }
  MetricsReport r;
  r.values["expected_calibration_error"] = ece;
  r.values["maximum_calibration_error"] = mce;
  r.values["brier_score_loss"] = brier / static_cast<double>(n);
  r.metadata["n_bins"] = std::to_string(n_bins);
  return r;
}

MetricsReport evaluate_fairness(const Prediction& pred, std::span<const int> y, std::span<const int> groups,
                                int positive_class) {
  check_inputs(pred, y);
  if (groups.size() != y.size()) raise(ErrorCode::LengthMismatch, "group column length differs from label count");
  if (positive_class < 0 || static_cast<std::size_t>(positive_class) >= pred.n_classes())
    raise(ErrorCode::InvalidArgument, "positive class outside 0..K-1");
  std::set<int> ids(groups.begin(), groups.end());
  if (ids.size() < 2) raise(ErrorCode::SingleGroup, "fairness metrics need at least two groups");
  if (std::find(y.begin(), y.end(), positive_class) == y.end())
    raise(ErrorCode::NoPositiveClassInData, "no row has the positive class " + std::to_string(positive_class));

  struct Counts {
    double n = 0, pred_pos = 0, pos = 0, tp = 0, neg = 0, fp = 0;
  };
  std::map<int, Counts> by_group;
  for (std::size_t i = 0; i < y.size(); ++i) {
    Counts& c = by_group[groups[i]];
    const bool yhat = pred.labels[i] == positive_class;
    c.n += 1;
    c.pred_pos += yhat;
    if (y[i] == positive_class) {
      c.pos += 1;
      c.tp += yhat;
    } else {
      c.neg += 1;
      c.fp += yhat;
    }
  }
  auto max_gap = [&](auto rate) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& [g, c] : by_group) {
      const double r = rate(c);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    return hi - lo;
  };
  bool tpr_defined = true, fpr_defined = true;
  for (const auto& [g, c] : by_group) {
    tpr_defined = tpr_defined && c.pos > 0;
    fpr_defined = fpr_defined && c.neg > 0;
  }
  MetricsReport r;
  r.values["statistical_parity_difference"] = max_gap([](const Counts& c) { return c.pred_pos / c.n; });
  std::vector<std::string> undefined;
  if (tpr_defined) {
    const double tpr_gap = max_gap([](const Counts& c) { return c.tp / c.pos; });
    r.values["equalized_opportunity_difference"] = tpr_gap;
    if (fpr_defined)
      r.values["equalized_odds_difference"] =
          std::max(tpr_gap, max_gap([](const Counts& c) { return c.fp / c.neg; }));
    else
      undefined.push_back("equalized_odds_difference");
  } else {
    undefined.push_back("equalized_odds_difference");
    undefined.push_back("equalized_opportunity_difference");
  }
  r.metadata["positive_class"] = std::to_string(positive_class);
  r.metadata["n_groups"] = std::to_string(by_group.size());
  if (!undefined.empty()) r.metadata["undefined"] = join(undefined);
  return r;
}

}  // namespace tabtune
