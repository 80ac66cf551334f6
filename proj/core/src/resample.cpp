#include "tabtune/resample.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <string>

#include "tabtune/error.hpp"
#include "tabtune/neighbors.hpp"
#include "tabtune/rng.hpp"

namespace tabtune {

std::size_t ResampleSpec::effective_k() const {
  if (k_neighbors > 0) return k_neighbors;
  return method == ResampleMethod::NeighborhoodCleaning ? 3 : 5;
}

ResampleMethod parse_resample_method(std::string_view name) {
  if (name == "none") return ResampleMethod::None;
  if (name == "smote") return ResampleMethod::Smote;
  if (name == "random_over") return ResampleMethod::RandomOver;
  if (name == "random_under") return ResampleMethod::RandomUnder;
  if (name == "tomek") return ResampleMethod::Tomek;
  if (name == "kmeans") return ResampleMethod::KMeansCentroids;
  if (name == "knn") return ResampleMethod::NeighborhoodCleaning;
  raise(ErrorCode::InvalidConfig, "unknown sampling method '" + std::string(name) + "'");
}

std::string_view resample_method_name(ResampleMethod method) {
  switch (method) {
    case ResampleMethod::None: return "none";
    case ResampleMethod::Smote: return "smote";
    case ResampleMethod::RandomOver: return "random_over";
    case ResampleMethod::RandomUnder: return "random_under";
    case ResampleMethod::Tomek: return "tomek";
    case ResampleMethod::KMeansCentroids: return "kmeans";
    case ResampleMethod::NeighborhoodCleaning: return "knn";
  }
  return "none";
}

namespace {

using ClassMembers = std::map<int, std::vector<std::size_t>>;

ClassMembers group_by_class(const std::vector<int>& labels) {
  ClassMembers members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  return members;
}

std::size_t max_count(const ClassMembers& m) {
  std::size_t best = 0;
  for (const auto& [c, rows] : m) best = std::max(best, rows.size());
  return best;
}

std::size_t min_count(const ClassMembers& m) {
  std::size_t best = static_cast<std::size_t>(-1);
  for (const auto& [c, rows] : m) best = std::min(best, rows.size());
  return best;
}

Resampled keep_rows(const FeatureMatrix& x, const std::vector<int>& y, const std::vector<bool>& keep) {
  Resampled out;
  out.features.cols = x.cols;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!keep[i]) continue;
    out.features.append_row(x.row(i));
    out.labels.push_back(y[i]);
  }
  return out;
}

void require_all_classes(const ClassMembers& before, const std::vector<int>& after) {
  auto remaining = group_by_class(after);
  for (const auto& [c, rows] : before)
    if (!remaining.contains(c)) raise(ErrorCode::DegenerateAfterCleaning, "class " + std::to_string(c) + " removed entirely");
}

Resampled smote(const FeatureMatrix& x, const std::vector<int>& y, const ClassMembers& members, std::size_t k, Rng& rng) {
  const std::size_t target = max_count(members);
  for (const auto& [c, rows] : members)
    if (rows.size() < target && rows.size() < 2)
      raise(ErrorCode::TooFewMinoritySamples, "class " + std::to_string(c) + " has " + std::to_string(rows.size()) +
                                                  " member(s); smote needs at least 2");
  Resampled out{x, y};
  std::vector<double> synthetic(x.cols);
  for (const auto& [c, rows] : members) {
    for (std::size_t n = rows.size(); n < target; ++n) {
      std::size_t base = rows[uniform_index(rng, rows.size())];
      auto nn = nearest_neighbors(x, rows, x.row(base), k, base);
      std::size_t partner = nn[uniform_index(rng, nn.size())];
      double u = uniform01(rng);
      auto a = x.row(base);
      auto b = x.row(partner);
      for (std::size_t f = 0; f < x.cols; ++f) synthetic[f] = a[f] + u * (b[f] - a[f]);
      out.features.append_row(synthetic);
      out.labels.push_back(c);
    }
  }
  return out;
}

Resampled random_over(const FeatureMatrix& x, const std::vector<int>& y, const ClassMembers& members, Rng& rng) {
  const std::size_t target = max_count(members);
  Resampled out{x, y};
  for (const auto& [c, rows] : members) {
    for (std::size_t n = rows.size(); n < target; ++n) {
      out.features.append_row(x.row(rows[uniform_index(rng, rows.size())]));
      out.labels.push_back(c);
    }
  }
  return out;
}

Resampled random_under(const FeatureMatrix& x, const std::vector<int>& y, const ClassMembers& members, Rng& rng) {
  const std::size_t target = min_count(members);
  std::vector<bool> keep(y.size(), true);
  for (const auto& [c, rows] : members) {
    if (rows.size() <= target) continue;
    std::vector<std::size_t> order = rows;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = target; i < order.size(); ++i) keep[order[i]] = false;
  }
  return keep_rows(x, y, keep);
}

Resampled tomek(const FeatureMatrix& x, const std::vector<int>& y, const ClassMembers& members) {
  const std::size_t n = y.size();
  std::vector<std::size_t> nn(n);
  for (std::size_t i = 0; i < n; ++i) nn[i] = nearest_neighbors(x, x.row(i), 1, i).front();
  std::vector<bool> keep(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = nn[i];
    if (j <= i || nn[j] != i || y[i] == y[j]) continue;
    std::size_t size_i = members.at(y[i]).size();
    std::size_t size_j = members.at(y[j]).size();
    // Larger class loses its member; on equal sizes the higher class index does.
    bool drop_i = size_i > size_j || (size_i == size_j && y[i] > y[j]);
    keep[drop_i ? i : j] = false;
  }
  return keep_rows(x, y, keep);
}

Resampled cluster_centroids(const FeatureMatrix& x, const ClassMembers& members,
                            std::uint64_t seed) {
  const std::size_t target = min_count(members);
  Resampled out;
  out.features.cols = x.cols;
  for (const auto& [c, rows] : members) {
    if (rows.size() == target) {
      for (std::size_t r : rows) {
        out.features.append_row(x.row(r));
        out.labels.push_back(c);
      }
      continue;
    }
    FeatureMatrix cls = x.select_rows(rows);
    FeatureMatrix centers = kmeans_centroids(cls, target, 20, derive_seed(seed, "kmeans/" + std::to_string(c)));
    for (std::size_t k = 0; k < centers.rows; ++k) {
      out.features.append_row(centers.row(k));
      out.labels.push_back(c);
    }
  }
  return out;
}

int plurality(const std::vector<int>& y, const std::vector<std::size_t>& idx) {
  std::map<int, std::size_t> votes;
  for (std::size_t i : idx) ++votes[y[i]];
  int best = votes.begin()->first;
  std::size_t best_count = 0;
  for (const auto& [c, n] : votes) {
    if (n > best_count) {
      best = c;
      best_count = n;
    }
  }
  return best;
}

Resampled neighborhood_cleaning(const FeatureMatrix& x, const std::vector<int>& y, const ClassMembers& members,
                                std::size_t k) {
  const std::size_t smallest = min_count(members);
  int minority = members.begin()->first;
  for (const auto& [c, rows] : members) {
    if (rows.size() == smallest) {
      minority = c;
      break;
    }
  }
  const std::size_t n = y.size();
  std::vector<bool> keep(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    auto nn = nearest_neighbors(x, x.row(i), k, i);
    if (nn.empty()) continue;
    int vote = plurality(y, nn);
    if (vote == y[i]) continue;
    if (y[i] != minority) {
      keep[i] = false;
    } else {
      for (std::size_t j : nn)
        if (y[j] != minority) keep[j] = false;
    }
  }
  return keep_rows(x, y, keep);
}

}  // namespace

FeatureMatrix kmeans_centroids(const FeatureMatrix& points, std::size_t k, std::size_t iterations, std::uint64_t seed) {
  if (k == 0 || k > points.rows) raise(ErrorCode::InvalidArgument, "k-means needs 1 <= k <= rows");
  Rng rng(seed);
  std::vector<std::size_t> order(points.rows);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + uniform_index(rng, points.rows - i)]);
  FeatureMatrix centers(k, points.cols);
  for (std::size_t i = 0; i < k; ++i) {
    auto src = points.row(order[i]);
    std::copy(src.begin(), src.end(), centers.row(i).begin());
  }
  std::vector<std::size_t> assignment(points.rows, 0);
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t r = 0; r < points.rows; ++r) assignment[r] = nearest_neighbors(centers, points.row(r), 1).front();
    FeatureMatrix sums(k, points.cols);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t r = 0; r < points.rows; ++r) {
      auto dst = sums.row(assignment[r]);
      auto src = points.row(r);
      for (std::size_t f = 0; f < points.cols; ++f) dst[f] += src[f];
      ++counts[assignment[r]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its previous center
      for (std::size_t f = 0; f < points.cols; ++f) centers(c, f) = sums(c, f) / static_cast<double>(counts[c]);
    }
  }
  return centers;
}

Resampled resample(const FeatureMatrix& features, const std::vector<int>& labels, const ResampleSpec& spec) {
  if (features.rows != labels.size()) raise(ErrorCode::LengthMismatch, "feature rows differ from label count");
  if (spec.method == ResampleMethod::None) return {features, labels};
  const auto members = group_by_class(labels);
  if (members.size() < 2) raise(ErrorCode::InvalidArgument, "resampling needs at least two classes");
  Rng rng(derive_seed(spec.seed, resample_method_name(spec.method)));

  Resampled out;
  switch (spec.method) {
    case ResampleMethod::Smote: out = smote(features, labels, members, spec.effective_k(), rng); break;
    case ResampleMethod::RandomOver: out = random_over(features, labels, members, rng); break;
    case ResampleMethod::RandomUnder: out = random_under(features, labels, members, rng); break;
    case ResampleMethod::Tomek: out = tomek(features, labels, members); break;
    case ResampleMethod::KMeansCentroids: out = cluster_centroids(features, members, spec.seed); break;
    case ResampleMethod::NeighborhoodCleaning:
      out = neighborhood_cleaning(features, labels, members, spec.effective_k());
      break;
    case ResampleMethod::None: break;
  }
  require_all_classes(members, out.labels);
  return out;
}

}  // namespace tabtune
