#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tabtune/rng.hpp"

namespace tabtune {

/// Contiguous row-major block of 64-bit reals.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) { return Tensor({rows, cols}, fill); }
  static Tensor vector(std::size_t n, double fill = 0.0) { return Tensor({n}, fill); }
  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rank() const noexcept { return shape_.size(); }
  /// Leading extent (1 for rank-1 tensors viewed as a row).
  std::size_t rows() const noexcept { return shape_.size() >= 2 ? shape_[0] : 1; }
  /// Trailing extent.
  std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  void fill(double v);
  bool all_finite() const;

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

Tensor random_normal(std::vector<std::size_t> shape, double stddev, Rng& rng);

struct AdamMoments {
  Tensor m;
  Tensor v;
};

struct Param {
  Tensor value;
  Tensor grad;
  bool trainable = true;
  std::optional<AdamMoments> moments;
};

/// Named model parameters. Iteration order is by name, which keeps
/// optimizer updates and serialization deterministic.
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor value, bool trainable = true);
  bool contains(const std::string& name) const { return params_.contains(name); }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  void erase(const std::string& name) { params_.erase(name); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  void zero_grad();
  void set_trainable(bool trainable);
  void clear_moments();

  std::size_t total_count() const;
  std::size_t trainable_count() const;

 private:
  std::map<std::string, Param> params_;
};

/// Bit-level hash of every parameter value (names and shapes included).
std::uint64_t fingerprint(const ParamStore& store);

}  // namespace tabtune
