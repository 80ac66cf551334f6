#include "tabtune/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tabtune/error.hpp"

namespace tabtune {

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd" || name == "SGD") return OptimizerKind::SGD;
  if (name == "adam" || name == "Adam") return OptimizerKind::Adam;
  if (name == "adamw" || name == "AdamW") return OptimizerKind::AdamW;
  raise(ErrorCode::InvalidConfig, "unknown optimizer '" + std::string(name) + "'");
}

std::string_view optimizer_kind_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::SGD: return "SGD";
    case OptimizerKind::Adam: return "Adam";
    case OptimizerKind::AdamW: return "AdamW";
  }
  return "Adam";
}

Optimizer::Optimizer(OptimizerSpec spec, std::size_t steps_per_epoch)
    : spec_(spec), warmup_steps_(spec.warmup_epochs * std::max<std::size_t>(steps_per_epoch, 1)) {
  if (!(spec_.learning_rate > 0.0)) raise(ErrorCode::InvalidConfig, "learning_rate must be positive");
  if (spec_.weight_decay < 0.0) raise(ErrorCode::InvalidConfig, "weight_decay must be non-negative");
}

double Optimizer::next_learning_rate() const {
  const std::size_t t = steps_ + 1;
  if (warmup_steps_ > 0 && t <= warmup_steps_)
    return spec_.learning_rate * static_cast<double>(t) / static_cast<double>(warmup_steps_);
  return spec_.learning_rate;
}

void Optimizer::step(ParamStore& store) {
  const double lr = next_learning_rate();
  ++steps_;

  double clip_factor = 1.0;
  if (spec_.clip_norm) {
    double sq = 0.0;
    for (const auto& [name, p] : store)
      if (p.trainable)
        for (double g : p.grad.values()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > *spec_.clip_norm) clip_factor = *spec_.clip_norm / norm;
  }

  const double t = static_cast<double>(steps_);
  const double bias1 = 1.0 - std::pow(spec_.beta1, t);
  const double bias2 = 1.0 - std::pow(spec_.beta2, t);
  for (auto& [name, p] : store) {
    if (!p.trainable) continue;
    auto w = p.value.values();
    auto g = p.grad.values();
    if (spec_.kind == OptimizerKind::SGD) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (clip_factor * g[i] + spec_.weight_decay * w[i]);
      continue;
    }
    if (!p.moments) p.moments = AdamMoments{Tensor(p.value.shape()), Tensor(p.value.shape())};
    auto m = p.moments->m.values();
    auto v = p.moments->v.values();
    const bool decoupled = spec_.kind == OptimizerKind::AdamW;
    for (std::size_t i = 0; i < w.size(); ++i) {
      double gi = clip_factor * g[i];
      if (!decoupled) gi += spec_.weight_decay * w[i];
      m[i] = spec_.beta1 * m[i] + (1.0 - spec_.beta1) * gi;
      v[i] = spec_.beta2 * v[i] + (1.0 - spec_.beta2) * gi * gi;
      if (decoupled) w[i] -= lr * spec_.weight_decay * w[i];
      w[i] -= lr * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + spec_.eps);
    }
  }
}

}  // namespace tabtune
