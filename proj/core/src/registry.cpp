#include <algorithm>

#include "tabtune/baselines.hpp"
#include "tabtune/error.hpp"
#include "tabtune/minicl.hpp"
#include "tabtune/model.hpp"

namespace tabtune {

void Model::set_context(ContextState context) {
  if (context.features.rows != context.labels.size())
    raise(ErrorCode::LengthMismatch, "context rows differ from context labels");
  for (int y : context.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes_)
      raise(ErrorCode::InvalidArgument, "context label outside 0..n_classes-1");
  context_ = std::move(context);
}

const ContextState& Model::context() const {
  if (!context_) raise(ErrorCode::NotFitted, name() + " has no context; fit it first");
  return *context_;
}

Var Model::episode_loss(Tape&, const FeatureMatrix&, std::span<const int>, const FeatureMatrix&, std::span<const int>,
                        std::size_t, bool, Rng*) {
  raise(ErrorCode::UnsupportedStrategy, name() + " cannot be trained on episodes");
}

Var Model::batch_loss(Tape&, const FeatureMatrix&, std::span<const int>, bool, Rng*) {
  raise(ErrorCode::UnsupportedStrategy, name() + " cannot be trained on supervised batches");
}

std::string_view strategy_key_name(StrategyKey key) {
  switch (key) {
    case StrategyKey::Inference: return "inference";
    case StrategyKey::Sft: return "sft";
    case StrategyKey::Meta: return "meta";
    case StrategyKey::PeftSft: return "peft_sft";
    case StrategyKey::PeftMeta: return "peft_meta";
  }
  return "inference";
}

char support_symbol(Support s) {
  switch (s) {
    case Support::Full: return 'Y';
    case Support::Experimental: return '*';
    case Support::None: return '-';
  }
  return '-';
}

Support Capabilities::of(StrategyKey key) const {
  switch (key) {
    case StrategyKey::Inference: return inference;
    case StrategyKey::Sft: return sft;
    case StrategyKey::Meta: return meta;
    case StrategyKey::PeftSft: return peft_sft;
    case StrategyKey::PeftMeta: return peft_meta;
  }
  return Support::None;
}

const HyperDefaults* ModelSpec::defaults_for(StrategyKey key) const {
  for (const auto& [k, d] : defaults)
    if (k == key) return &d;
  return nullptr;
}

namespace {

const HyperDefaults kPeftDefaults = {{"r", "8"}, {"lora_alpha", "16"}, {"lora_dropout", "0.05"}};

std::vector<ModelSpec> build_registry() {
  std::vector<ModelSpec> out;

  ModelSpec icl;
  icl.name = "MiniICL";
  icl.description = "split-masked in-context transformer (d_model=32, 2 heads, 2 layers, k_max=10)";
  icl.profile = "icl-numeric";
  icl.capabilities = {Support::Full, Support::Full, Support::Full, Support::Full, Support::Full};
  // Learning rates are the published 1e-5 (SFT) and 2e-6 (meta) scaled by 100 for desk-scale data.
  icl.defaults = {
      {StrategyKey::Inference, {{"softmax_temperature", "0.9"}, {"n_estimators", "8"}}},
      {StrategyKey::Sft, {{"epochs", "5"}, {"learning_rate", "1e-3"}, {"batch_size", "16"}, {"optimizer", "adam"}}},
      {StrategyKey::Meta,
       {{"epochs", "5"},
        {"learning_rate", "2e-4"},
        {"support_size", "48"},
        {"query_size", "32"},
        {"n_episodes", "1000"},
        {"optimizer", "adam"}}},
      {StrategyKey::PeftSft, kPeftDefaults},
      {StrategyKey::PeftMeta, kPeftDefaults},
  };
  icl.arch = MiniIclArch{};
  out.push_back(icl);

  ModelSpec logistic;
  logistic.name = "LogisticRegression";
  logistic.description = "multinomial logistic regression trained by full-batch AdamW";
  logistic.profile = "linear-onehot";
  logistic.capabilities = {Support::Full, Support::Full, Support::None, Support::Experimental, Support::None};
  logistic.defaults = {
      {StrategyKey::Inference, {{"steps", "500"}, {"learning_rate", "0.05"}, {"weight_decay", "1e-4"}, {"optimizer", "adamw"}}},
      {StrategyKey::Sft, {{"epochs", "5"}, {"learning_rate", "1e-2"}, {"batch_size", "16"}, {"optimizer", "adam"}}},
      {StrategyKey::PeftSft, kPeftDefaults},
  };
  out.push_back(logistic);

  ModelSpec knn;
  knn.name = "KNN";
  knn.description = "k-nearest-neighbour classifier with neighbour-frequency probabilities";
  knn.profile = "linear-onehot";
  knn.capabilities = {Support::Full, Support::None, Support::None, Support::None, Support::None};
  knn.defaults = {{StrategyKey::Inference, {{"k", "5"}}}};
  out.push_back(knn);
  return out;
}

std::vector<ReferenceModelEntry> build_reference() {
  const Capabilities all_full{Support::Full, Support::Full, Support::Full, Support::Full, Support::Full};
  const std::string orion_inference =
      "Inference config: min_batch_size=1, safety_factor=0.8, offload=auto (COL), False (ROW/ICL), use_amp=True";
  const std::string std_sft = "epochs=5, learning_rate=1e-5, batch_size=16, optimizer=Adam";
  const std::string std_meta =
      "epochs=5, learning_rate=2e-6, support_size=48, query_size=32, n_episodes=1000, optimizer=Adam";
  const std::string lora = "r=8, lora_alpha=16, lora_dropout=0.05";

  auto orion_like = [&](std::string name) {
    return ReferenceModelEntry{std::move(name),
                               "In-Context Learning",
                               all_full,
                               {{StrategyKey::Inference, orion_inference},
                                {StrategyKey::Sft, std_sft},
                                {StrategyKey::Meta, std_meta},
                                {StrategyKey::PeftSft, lora},
                                {StrategyKey::PeftMeta, lora}}};
  };

  std::vector<ReferenceModelEntry> out;
  out.push_back(orion_like("OrionMSP"));
  out.push_back(orion_like("OrionBiX"));
  out.push_back({"TabPFN",
                 "Prior-Fitted Network",
                 {Support::Full, Support::Full, Support::Full, Support::Experimental, Support::Experimental},
                 {{StrategyKey::Inference, "n_estimators=8, softmax_temperature=0.9, average_before_softmax=False"},
                  {StrategyKey::Sft,
                   "epochs=25, learning_rate=1e-5, max_episode_size=len(X), query_set_ratio=0.3, weight_decay=1e-4, "
                   "optimizer=AdamW"},
                  {StrategyKey::Meta, "epochs=3, learning_rate=1e-5, batch_size=256, optimizer=AdamW"},
                  {StrategyKey::PeftSft, lora},
                  {StrategyKey::PeftMeta, lora}}});
  out.push_back(orion_like("TabICL"));
  out.push_back({"TabDPT",
                 "In-Context Learning",
                 all_full,
                 {{StrategyKey::Inference, "n_ensembles=8, temperature=0.8, context_size=512, permute_classes=True"},
                  {StrategyKey::Sft,
                   "epochs=5, learning_rate=2e-5, batch_size=32, weight_decay=1e-4, warmup_epochs=1, optimizer=Adam"},
                  {StrategyKey::Meta,
                   "epochs=5, learning_rate=1e-5, batch_size=8, support_size=512, query_size=256, steps_per_epoch=100, "
                   "optimizer=Adam"},
                  {StrategyKey::PeftSft, lora},
                  {StrategyKey::PeftMeta, lora}}});
  out.push_back({"Mitra",
                 "Scalable ICL",
                 all_full,
                 {{StrategyKey::Inference, "d_model=64, num_heads=4, num_layers=2, use_synthetic_prior=True"},
                  {StrategyKey::Sft,
                   "epochs=5, learning_rate=1e-5, batch_size=128, weight_decay=1e-4, warmup_epochs=1, optimizer=Adam"},
                  {StrategyKey::Meta,
                   "epochs=3, learning_rate=1e-5, batch_size=4, support_size=128, query_size=128, steps_per_epoch=50, "
                   "optimizer=Adam"},
                  {StrategyKey::PeftSft, lora},
                  {StrategyKey::PeftMeta, lora}}});
  out.push_back({"ContextTab",
                 "Semantics-Aware ICL",
                 {Support::Full, Support::Full, Support::None, Support::Experimental, Support::None},
                 {{StrategyKey::Inference, "(No specific inference parameters)"},
                  {StrategyKey::Sft, "epochs=5, learning_rate=1e-4, batch_size=128, optimizer=Adam"},
                  {StrategyKey::PeftSft, lora}}});
  return out;
}

}  // namespace

const std::vector<ModelSpec>& model_registry() {
  static const std::vector<ModelSpec> kRegistry = build_registry();
  return kRegistry;
}

const ModelSpec& find_model_spec(std::string_view name) {
  const auto& reg = model_registry();
  auto it = std::find_if(reg.begin(), reg.end(), [&](const ModelSpec& s) { return s.name == name; });
  if (it == reg.end()) raise(ErrorCode::UnknownModel, "'" + std::string(name) + "' is not a registered model");
  return *it;
}

std::unique_ptr<Model> create_model(std::string_view name, std::size_t n_features, std::size_t n_classes,
                                    std::uint64_t seed) {
  const ModelSpec& spec = find_model_spec(name);
  if (spec.name == "MiniICL") return std::make_unique<MiniIcl>(n_features, n_classes, *spec.arch, seed);
  if (spec.name == "LogisticRegression") return std::make_unique<LogisticRegression>(n_features, n_classes, seed);
  return std::make_unique<KnnClassifier>(n_features, n_classes);
}

const std::vector<ReferenceModelEntry>& reference_models() {
  static const std::vector<ReferenceModelEntry> kReference = build_reference();
  return kReference;
}

}  // namespace tabtune
