#include "tabtune/neighbors.hpp"

#include <algorithm>
#include <numeric>

namespace tabtune {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<std::size_t> nearest_neighbors(const FeatureMatrix& points, std::span<const std::size_t> candidates,
                                           std::span<const double> query, std::size_t k, std::size_t exclude) {
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(candidates.size());
  for (std::size_t idx : candidates) {
    if (idx == exclude) continue;
    scored.emplace_back(squared_distance(points.row(idx), query), idx);
  }
  k = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = scored[i].second;
  return out;
}

std::vector<std::size_t> nearest_neighbors(const FeatureMatrix& points, std::span<const double> query, std::size_t k,
                                           std::size_t exclude) {
  std::vector<std::size_t> all(points.rows);
  std::iota(all.begin(), all.end(), 0);
  return nearest_neighbors(points, all, query, k, exclude);
}

}  // namespace tabtune
