#include <algorithm>

#include "tabtune/error.hpp"
#include "tabtune/model.hpp"

namespace tabtune {

namespace {

std::string down_name(const std::string& weight) { return weight + ".lora_down"; }
std::string up_name(const std::string& weight) { return weight + ".lora_up"; }

Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  Tensor mask = Tensor::matrix(rows, cols);
  const double keep = 1.0 - rate;
  for (double& m : mask.values()) m = uniform01(rng) < keep ? 1.0 / keep : 0.0;
  return mask;
}

template <class Store>
Var lora_linear_impl(Tape& tape, Var x, Store& store, const std::string& weight, const std::optional<LoraConfig>& cfg,
                     bool train, Rng* rng) {
  Var base = ops::linear(x, tape.param(store, weight));
  if (!cfg || !store.contains(down_name(weight))) return base;
  Var projected = ops::linear(x, tape.param(store, down_name(weight)));
  if (train && rng && cfg->dropout > 0.0) {
    const Tensor& v = projected.value();
    projected = ops::mul_const(projected, dropout_mask(v.rows(), v.cols(), cfg->dropout, *rng));
  }
  Var delta = ops::linear(projected, tape.param(store, up_name(weight)));
  return ops::add(base, ops::scale(delta, cfg->scaling()));
}

}  // namespace

Var lora_linear(Tape& tape, Var x, ParamStore& store, const std::string& weight, const std::optional<LoraConfig>& cfg,
                bool train, Rng* rng) {
  return lora_linear_impl(tape, x, store, weight, cfg, train, rng);
}

Var lora_linear(Tape& tape, Var x, const ParamStore& store, const std::string& weight,
                const std::optional<LoraConfig>& cfg, bool train, Rng* rng) {
  return lora_linear_impl(tape, x, store, weight, cfg, train, rng);
}

Tensor lora_forward(const Tensor& weight, const Tensor& down, const Tensor& up, const LoraConfig& cfg, const Tensor& x,
                    bool train, Rng& rng) {
  const std::size_t n_out = weight.rows(), n_in = weight.cols(), r = down.rows();
  if (x.cols() != n_in || down.cols() != n_in || up.rows() != n_out || up.cols() != r)
    raise(ErrorCode::ShapeMismatch, "lora_forward: weight/adapter/input shapes disagree");
  const std::size_t n = x.rows();
  Tensor h = Tensor::matrix(n, n_out);
  Tensor proj = Tensor::matrix(n, r);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < n_out; ++o) {
      double s = 0.0;
      for (std::size_t c = 0; c < n_in; ++c) s += weight.at(o, c) * x.at(i, c);
      h.at(i, o) = s;
    }
    for (std::size_t k = 0; k < r; ++k) {
      double s = 0.0;
      for (std::size_t c = 0; c < n_in; ++c) s += down.at(k, c) * x.at(i, c);
      proj.at(i, k) = s;
    }
  }
  if (train && cfg.dropout > 0.0) {
    Tensor mask = dropout_mask(n, r, cfg.dropout, rng);
    for (std::size_t i = 0; i < proj.size(); ++i) proj[i] *= mask[i];
  }
  const double scaling = cfg.scaling();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < n_out; ++o) {
      double s = 0.0;
      for (std::size_t k = 0; k < r; ++k) s += up.at(o, k) * proj.at(i, k);
      h.at(i, o) += scaling * s;
    }
  return h;
}

PeftReport attach_lora(Model& model, const LoraConfig& cfg, std::uint64_t seed) {
  if (cfg.rank == 0) raise(ErrorCode::InvalidConfig, "LoRA rank must be at least 1");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) raise(ErrorCode::InvalidConfig, "LoRA dropout must lie in [0,1)");
  PeftReport report;
  report.targets = model.lora_targets();
  ParamStore& store = model.params();
  if (report.targets.empty()) {
    report.outcome = PeftOutcome::Fallback;
    report.trainable_params = store.trainable_count();
    report.total_params = store.total_count();
    return report;
  }
  Rng rng(derive_seed(seed, "lora"));
  store.set_trainable(false);
  store.clear_moments();
  for (const auto& target : report.targets) {
    const Tensor& w = store.at(target).value;
    const std::size_t n_out = w.rows(), n_in = w.cols();
    store.add(down_name(target), random_normal({cfg.rank, n_in}, 0.02, rng), true);
    store.add(up_name(target), Tensor::matrix(n_out, cfg.rank), true);
  }
  for (const auto& head : model.head_params()) store.at(head).trainable = true;
  model.set_lora(cfg);
  report.outcome = PeftOutcome::Attached;
  report.trainable_params = store.trainable_count();
  report.total_params = store.total_count();
  return report;
}

std::size_t lora_trainable_closed_form(const Model& model, const LoraConfig& cfg) {
  std::size_t n = 0;
  for (const auto& target : model.lora_targets()) {
    const Tensor& w = model.params().at(target).value;
    n += cfg.rank * (w.rows() + w.cols());
  }
  for (const auto& head : model.head_params()) n += model.params().at(head).value.size();
  return n;
}

}  // namespace tabtune
