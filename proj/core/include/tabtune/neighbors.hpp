#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tabtune/matrix.hpp"

namespace tabtune {

double squared_distance(std::span<const double> a, std::span<const double> b);

/// Brute-force k nearest rows of `points` to `query`, restricted to
/// `candidates`. Ascending by distance; equal distances resolve to the lower
/// row index. `exclude` (if < points.rows) is never returned.
std::vector<std::size_t> nearest_neighbors(const FeatureMatrix& points, std::span<const std::size_t> candidates,
                                           std::span<const double> query, std::size_t k,
                                           std::size_t exclude = static_cast<std::size_t>(-1));

/// Same as above with every row of `points` as a candidate.
std::vector<std::size_t> nearest_neighbors(const FeatureMatrix& points, std::span<const double> query, std::size_t k,
                                           std::size_t exclude = static_cast<std::size_t>(-1));

}  // namespace tabtune
