#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tabtune {

/// Dense row-major matrix of 64-bit reals; the encoded feature space every
/// model consumes.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  void append_row(std::span<const double> values);

  FeatureMatrix select_rows(std::span<const std::size_t> indices) const;

  bool operator==(const FeatureMatrix&) const = default;
};

/// FNV-1a over the raw bytes of the matrix (shape included).
std::uint64_t fingerprint(const FeatureMatrix& m);

}  // namespace tabtune
