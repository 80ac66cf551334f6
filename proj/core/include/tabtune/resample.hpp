#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "tabtune/matrix.hpp"

namespace tabtune {

enum class ResampleMethod { None, Smote, RandomOver, RandomUnder, Tomek, KMeansCentroids, NeighborhoodCleaning };

struct ResampleSpec {
  ResampleMethod method = ResampleMethod::None;
  /// 0 selects the method default: 5 for Smote, 3 for NeighborhoodCleaning.
  std::size_t k_neighbors = 0;
  std::uint64_t seed = 0;

  std::size_t effective_k() const;

  bool operator==(const ResampleSpec&) const = default;
};

/// Names follow the sampling.method config values: none, smote, random_over,
/// random_under, tomek, kmeans, knn.
ResampleMethod parse_resample_method(std::string_view name);
std::string_view resample_method_name(ResampleMethod method);

struct Resampled {
  FeatureMatrix features;
  std::vector<int> labels;
};

/// Rebalance a training split in encoded feature space. Class labels are
/// dense indices; distances are Euclidean over all columns.
Resampled resample(const FeatureMatrix& features, const std::vector<int>& labels, const ResampleSpec& spec);

/// Lloyd's k-means, `iterations` rounds, centers seeded from distinct rows.
FeatureMatrix kmeans_centroids(const FeatureMatrix& points, std::size_t k, std::size_t iterations, std::uint64_t seed);

}  // namespace tabtune
