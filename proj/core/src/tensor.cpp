#include "tabtune/tensor.hpp"

#include <bit>
#include <cmath>
#include <functional>
#include <numeric>

#include "tabtune/error.hpp"

namespace tabtune {

namespace {
std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != element_count(shape_)) raise(ErrorCode::ShapeMismatch, "data length differs from shape product");
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor random_normal(std::vector<std::size_t> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Param& ParamStore::add(const std::string& name, Tensor value, bool trainable) {
  Param p;
  p.grad = Tensor(value.shape());
  p.value = std::move(value);
  p.trainable = trainable;
  auto [it, inserted] = params_.insert_or_assign(name, std::move(p));
  return it->second;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) raise(ErrorCode::InvalidArgument, "no parameter named '" + name + "'");
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) raise(ErrorCode::InvalidArgument, "no parameter named '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.fill(0.0);
}

void ParamStore::set_trainable(bool trainable) {
  for (auto& [name, p] : params_) p.trainable = trainable;
}

void ParamStore::clear_moments() {
  for (auto& [name, p] : params_) p.moments.reset();
}

std::size_t ParamStore::total_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

std::size_t ParamStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_)
    if (p.trainable) n += p.value.size();
  return n;
}

std::uint64_t fingerprint(const ParamStore& store) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, p] : store) {
    for (char c : name) feed(static_cast<unsigned char>(c));
    for (std::size_t d : p.value.shape()) feed(d);
    for (double v : p.value.values()) feed(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

}  // namespace tabtune
