#include "tabtune/tuning.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <set>

#include "tabtune/baselines.hpp"
#include "tabtune/config.hpp"
#include "tabtune/error.hpp"

namespace tabtune {

TuningStrategy parse_tuning_strategy(std::string_view name) {
  if (name == "inference") return TuningStrategy::Inference;
  if (name == "finetune") return TuningStrategy::Finetune;
  if (name == "peft") return TuningStrategy::Peft;
  raise(ErrorCode::InvalidConfig, "unknown tuning strategy '" + std::string(name) + "'");
}

std::string_view tuning_strategy_name(TuningStrategy s) {
  switch (s) {
    case TuningStrategy::Inference: return "inference";
    case TuningStrategy::Finetune: return "finetune";
    case TuningStrategy::Peft: return "peft";
  }
  return "inference";
}

FinetuneMode parse_finetune_mode(std::string_view name) {
  if (name == "sft") return FinetuneMode::Sft;
  if (name == "meta-learning" || name == "meta_learning" || name == "meta") return FinetuneMode::MetaLearning;
  raise(ErrorCode::InvalidConfig, "unknown finetune mode '" + std::string(name) + "'");
}

std::string_view finetune_mode_name(FinetuneMode m) {
  return m == FinetuneMode::Sft ? "sft" : "meta-learning";
}

StrategyKey strategy_key(const TuningConfig& cfg) {
  const bool meta = cfg.finetune_mode == FinetuneMode::MetaLearning;
  switch (cfg.strategy) {
    case TuningStrategy::Inference: return StrategyKey::Inference;
    case TuningStrategy::Finetune: return meta ? StrategyKey::Meta : StrategyKey::Sft;
    case TuningStrategy::Peft: return meta ? StrategyKey::PeftMeta : StrategyKey::PeftSft;
  }
  return StrategyKey::Inference;
}

const std::vector<std::string>& tuning_param_keys() {
  static const std::vector<std::string> kKeys = {
      "epochs",        "learning_rate",   "batch_size",        "support_size",          "query_size",
      "n_episodes",    "query_set_ratio", "optimizer",         "weight_decay",          "warmup_epochs",
      "clip_norm",     "finetune_mode",   "peft_config.r",     "peft_config.lora_alpha", "peft_config.lora_dropout",
  };
  return kKeys;
}

void apply_tuning_param(TuningConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "epochs") {
    cfg.epochs = parse_count(key, value);
  } else if (key == "learning_rate") {
    cfg.optimizer.learning_rate = parse_real(key, value);
    if (!(cfg.optimizer.learning_rate > 0.0)) raise(ErrorCode::InvalidConfig, "learning_rate must be positive");
  } else if (key == "batch_size") {
    cfg.batch_size = parse_count(key, value);
    if (cfg.batch_size == 0) raise(ErrorCode::InvalidConfig, "batch_size must be at least 1");
  } else if (key == "support_size") {
    cfg.support_size = parse_count(key, value);
    if (cfg.support_size == 0) raise(ErrorCode::InvalidConfig, "support_size must be at least 1");
  } else if (key == "query_size") {
    cfg.query_size = parse_count(key, value);
    if (cfg.query_size == 0) raise(ErrorCode::InvalidConfig, "query_size must be at least 1");
  } else if (key == "n_episodes") {
    cfg.n_episodes = parse_count(key, value);
  } else if (key == "query_set_ratio") {
    const double r = parse_real(key, value);
    if (!(r > 0.0 && r < 1.0)) raise(ErrorCode::InvalidConfig, "query_set_ratio must lie in (0,1)");
    cfg.query_set_ratio = r;
  } else if (key == "optimizer") {
    cfg.optimizer.kind = parse_optimizer_kind(value);
  } else if (key == "weight_decay") {
    cfg.optimizer.weight_decay = parse_real(key, value);
    if (cfg.optimizer.weight_decay < 0.0) raise(ErrorCode::InvalidConfig, "weight_decay must be non-negative");
  } else if (key == "warmup_epochs") {
    cfg.optimizer.warmup_epochs = parse_count(key, value);
  } else if (key == "clip_norm") {
    const double c = parse_real(key, value);
    if (!(c > 0.0)) raise(ErrorCode::InvalidConfig, "clip_norm must be positive");
    cfg.optimizer.clip_norm = c;
  } else if (key == "finetune_mode") {
    cfg.finetune_mode = parse_finetune_mode(value);
  } else if (key == "peft_config.r") {
    cfg.lora.rank = parse_count(key, value);
    if (cfg.lora.rank == 0) raise(ErrorCode::InvalidConfig, "peft_config.r must be at least 1");
  } else if (key == "peft_config.lora_alpha") {
    cfg.lora.alpha = parse_real(key, value);
  } else if (key == "peft_config.lora_dropout") {
    cfg.lora.dropout = parse_real(key, value);
    if (cfg.lora.dropout < 0.0 || cfg.lora.dropout >= 1.0)
      raise(ErrorCode::InvalidConfig, "peft_config.lora_dropout must lie in [0,1)");
  } else {
    raise(ErrorCode::InvalidConfig, "unknown tuning parameter '" + std::string(key) + "'");
  }
}

TuningConfig default_tuning_config(const ModelSpec& spec, TuningStrategy strategy, FinetuneMode mode) {
  TuningConfig cfg;
  cfg.strategy = strategy;
  cfg.finetune_mode = mode;
  if (strategy == TuningStrategy::Inference) return cfg;
  const StrategyKey base = mode == FinetuneMode::MetaLearning ? StrategyKey::Meta : StrategyKey::Sft;
  if (const HyperDefaults* d = spec.defaults_for(base))
    for (const auto& [k, v] : *d) apply_tuning_param(cfg, k, v);
  if (strategy == TuningStrategy::Peft) {
    const StrategyKey peft = mode == FinetuneMode::MetaLearning ? StrategyKey::PeftMeta : StrategyKey::PeftSft;
    if (const HyperDefaults* d = spec.defaults_for(peft))
      for (const auto& [k, v] : *d) apply_tuning_param(cfg, "peft_config." + k, v);
  }
  return cfg;
}

std::vector<int> Episode::remap(std::span<const int> labels, std::span<const std::size_t> rows) const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(label_map.at(labels[r]));
  return out;
}

namespace {

// Ascending contiguous map over the classes present in `support`; nullopt
// when some query label is not among them.
std::optional<std::map<int, int>> contiguous_map(std::span<const int> labels, std::span<const std::size_t> support,
                                                 std::span<const std::size_t> query) {
  std::set<int> classes;
  for (std::size_t r : support) classes.insert(labels[r]);
  for (std::size_t r : query)
    if (!classes.contains(labels[r])) return std::nullopt;
  std::map<int, int> out;
  int next = 0;
  for (int c : classes) out[c] = next++;
  return out;
}

FeatureMatrix gather(const FeatureMatrix& x, std::span<const std::size_t> rows) { return x.select_rows(rows); }

void check_training_inputs(const Model& model, const FeatureMatrix& x, std::span<const int> y) {
  if (x.rows == 0) raise(ErrorCode::EmptyTrainingSet, "no training rows");
  if (x.rows != y.size()) raise(ErrorCode::LengthMismatch, "feature rows differ from label count");
  if (x.cols != model.n_features()) raise(ErrorCode::ShapeMismatch, "feature width differs from the model input");
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ContextState full_context(const FeatureMatrix& x, std::span<const int> y) {
  return ContextState{x, std::vector<int>(y.begin(), y.end())};
}

}  // namespace

std::optional<Episode> sample_episode(std::span<const int> labels, std::size_t support_size, std::size_t query_size,
                                      Rng& rng) {
  const std::size_t n = labels.size();
  if (support_size + query_size > n)
    raise(ErrorCode::InfeasibleEpisode, "support " + std::to_string(support_size) + " + query " +
                                            std::to_string(query_size) + " exceeds " + std::to_string(n) + " rows");
  if (support_size == 0 || query_size == 0) raise(ErrorCode::InfeasibleEpisode, "support and query must be non-empty");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t take = support_size + query_size;
  for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  Episode ep;
  ep.support.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(support_size));
  ep.query.assign(idx.begin() + static_cast<std::ptrdiff_t>(support_size),
                  idx.begin() + static_cast<std::ptrdiff_t>(take));
  auto map = contiguous_map(labels, ep.support, ep.query);
  if (!map) return std::nullopt;
  ep.label_map = std::move(*map);
  return ep;
}

void validate_episode(const Episode& ep, std::span<const int> labels) {
  std::set<std::size_t> support(ep.support.begin(), ep.support.end());
  if (support.size() != ep.support.size()) raise(ErrorCode::InvalidArgument, "support has duplicate rows");
  std::set<std::size_t> query(ep.query.begin(), ep.query.end());
  if (query.size() != ep.query.size()) raise(ErrorCode::InvalidArgument, "query has duplicate rows");
  for (std::size_t r : query)
    if (support.contains(r)) raise(ErrorCode::InvalidArgument, "support and query overlap");
  std::set<int> support_classes;
  for (std::size_t r : ep.support) support_classes.insert(labels[r]);
  if (support_classes.size() != ep.label_map.size()) raise(ErrorCode::InvalidArgument, "label map domain differs");
  int expected = 0;
  for (const auto& [orig, mapped] : ep.label_map) {
    if (!support_classes.contains(orig) || mapped != expected++)
      raise(ErrorCode::InvalidArgument, "label map is not the ascending contiguous map of the support classes");
  }
  for (std::size_t r : ep.query)
    if (!ep.label_map.contains(labels[r])) raise(ErrorCode::InvalidArgument, "query class absent from support");
}

FitMetadata fit_zero_shot(Model& model, const FeatureMatrix& x, std::span<const int> y) {
  if (model.kind() == ModelKind::Parametric)
    raise(ErrorCode::UnsupportedStrategy, model.name() + " has no context to fit; it trains its own parameters");
  check_training_inputs(model, x, y);
  const auto start = std::chrono::steady_clock::now();
  model.set_context(full_context(x, y));
  FitMetadata meta;
  meta.strategy = "inference";
  meta.fit_seconds = seconds_since(start);
  return meta;
}

FitMetadata train_sft(Model& model, const FeatureMatrix& x, std::span<const int> y, const TuningConfig& cfg) {
  if (model.kind() == ModelKind::Instance)
    raise(ErrorCode::UnsupportedStrategy, model.name() + " has no trainable parameters");
  check_training_inputs(model, x, y);
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = x.rows;
  const std::size_t batch = std::max<std::size_t>(cfg.batch_size, 1);
  const std::size_t batches_per_epoch = (n + batch - 1) / batch;
  Optimizer opt(cfg.optimizer, batches_per_epoch);
  Rng shuffle_rng(derive_seed(cfg.seed, "sft/shuffle"));
  Rng dropout_rng(derive_seed(cfg.seed, "sft/dropout"));
  const bool episodic = model.kind() == ModelKind::InContext;

  FitMetadata meta;
  meta.strategy = "sft";
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = b * batch;
      const std::size_t size = std::min(batch, n - begin);
      std::span<const std::size_t> rows(order.data() + begin, size);
      Tape tape;
      Var loss;
      if (episodic) {
        std::size_t n_query = size / 2;  // ceil(B/2) support rows
        if (cfg.query_set_ratio) {
          n_query = static_cast<std::size_t>(*cfg.query_set_ratio * static_cast<double>(size));
          n_query = std::clamp<std::size_t>(n_query, 1, size > 1 ? size - 1 : 1);
        }
        const std::size_t n_support = size - n_query;
        auto support = rows.first(n_support);
        auto query = rows.subspan(n_support);
        auto map = n_query > 0 && n_support > 0 ? contiguous_map(y, support, query) : std::nullopt;
        if (!map) {
          ++meta.skipped;
          continue;
        }
        Episode ep{{support.begin(), support.end()}, {query.begin(), query.end()}, std::move(*map)};
        const auto sy = ep.remap(y, ep.support);
        const auto qy = ep.remap(y, ep.query);
        loss = model.episode_loss(tape, gather(x, ep.support), sy, gather(x, ep.query), qy, ep.label_map.size(), true,
                                  &dropout_rng);
      } else {
        std::vector<int> by;
        for (std::size_t r : rows) by.push_back(y[r]);
        loss = model.batch_loss(tape, gather(x, rows), by, true, &dropout_rng);
      }
      tape.backward(loss);
      opt.step(model.params());
      meta.final_loss = loss.value()[0];
      ++meta.executed;
    }
  }
  if (cfg.epochs > 0 && meta.executed == 0)
    raise(ErrorCode::AllBatchesSkipped, std::to_string(meta.skipped) + " pseudo-episodes skipped, none trained");
  meta.optimizer_steps = opt.steps_taken();
  if (episodic) model.set_context(full_context(x, y));
  meta.fit_seconds = seconds_since(start);
  return meta;
}

FitMetadata train_meta(Model& model, const FeatureMatrix& x, std::span<const int> y, const TuningConfig& cfg) {
  if (model.kind() != ModelKind::InContext)
    raise(ErrorCode::UnsupportedStrategy, model.name() + " cannot be meta-trained on episodes");
  check_training_inputs(model, x, y);
  const auto start = std::chrono::steady_clock::now();
  if (cfg.support_size + cfg.query_size > x.rows)
    raise(ErrorCode::InfeasibleEpisode, "support " + std::to_string(cfg.support_size) + " + query " +
                                            std::to_string(cfg.query_size) + " exceeds " + std::to_string(x.rows) +
                                            " training rows");
  Optimizer opt(cfg.optimizer, cfg.n_episodes);
  Rng episode_rng(derive_seed(cfg.seed, "meta/episodes"));
  Rng dropout_rng(derive_seed(cfg.seed, "meta/dropout"));
  const std::size_t budget = 5 * cfg.n_episodes;

  FitMetadata meta;
  meta.strategy = "meta-learning";
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::size_t done = 0;
    for (std::size_t attempt = 0; attempt < budget && done < cfg.n_episodes; ++attempt) {
      auto ep = sample_episode(y, cfg.support_size, cfg.query_size, episode_rng);
      if (!ep) {
        ++meta.skipped;
        continue;
      }
      validate_episode(*ep, y);
      const auto sy = ep->remap(y, ep->support);
      const auto qy = ep->remap(y, ep->query);
      Tape tape;
      Var loss = model.episode_loss(tape, gather(x, ep->support), sy, gather(x, ep->query), qy, ep->label_map.size(),
                                    true, &dropout_rng);
      tape.backward(loss);
      opt.step(model.params());
      meta.final_loss = loss.value()[0];
      ++done;
    }
    if (cfg.n_episodes > 0 && done == 0)
      raise(ErrorCode::AllBatchesSkipped, "every sampled episode in epoch " + std::to_string(epoch) + " was skipped");
    meta.executed += done;
  }
  meta.optimizer_steps = opt.steps_taken();
  model.set_context(full_context(x, y));
  meta.fit_seconds = seconds_since(start);
  return meta;
}

FitMetadata train_peft(Model& model, const FeatureMatrix& x, std::span<const int> y, const TuningConfig& cfg) {
  check_training_inputs(model, x, y);
  PeftReport report = attach_lora(model, cfg.lora, derive_seed(cfg.seed, "peft"));
  FitMetadata meta = cfg.finetune_mode == FinetuneMode::MetaLearning ? train_meta(model, x, y, cfg)
                                                                      : train_sft(model, x, y, cfg);
  meta.strategy = cfg.finetune_mode == FinetuneMode::MetaLearning ? "peft-meta-learning" : "peft-sft";
  meta.peft = report;
  return meta;
}

FitMetadata tune(Model& model, const ModelSpec& spec, const FeatureMatrix& x, std::span<const int> y,
                 const TuningConfig& cfg) {
  const StrategyKey key = strategy_key(cfg);
  if (spec.capabilities.of(key) == Support::None)
    raise(ErrorCode::UnsupportedStrategy,
          spec.name + " does not support strategy '" + std::string(strategy_key_name(key)) + "'");
  switch (cfg.strategy) {
    case TuningStrategy::Inference:
      if (auto* logistic = dynamic_cast<LogisticRegression*>(&model)) {
        check_training_inputs(model, x, y);
        const auto start = std::chrono::steady_clock::now();
        FitMetadata meta;
        meta.strategy = "inference";
        meta.optimizer_steps = logistic->fit_native(x, y);
        meta.fit_seconds = seconds_since(start);
        return meta;
      }
      return fit_zero_shot(model, x, y);
    case TuningStrategy::Finetune:
      return cfg.finetune_mode == FinetuneMode::MetaLearning ? train_meta(model, x, y, cfg)
                                                              : train_sft(model, x, y, cfg);
    case TuningStrategy::Peft: return train_peft(model, x, y, cfg);
  }
  return {};
}

}  // namespace tabtune
