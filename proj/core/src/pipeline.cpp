#include "tabtune/pipeline.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "tabtune/container.hpp"
#include "tabtune/error.hpp"

namespace tabtune {

using json = nlohmann::json;

namespace {

constexpr const char* kFinetuneModeKey = "finetune_mode";

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(' ');
    const auto last = item.find_last_not_of(' ');
    if (first != std::string::npos) out.push_back(item.substr(first, last - first + 1));
  }
  return out;
}

}  // namespace

TuningConfig PipelineConfig::resolved_tuning() const {
  TuningConfig cfg = default_tuning_config(find_model_spec(model_name), strategy, mode);
  for (const auto& [k, v] : tuning_params) {
    if (k == kFinetuneModeKey) continue;  // carried by `mode`
    apply_tuning_param(cfg, k, v);
  }
  cfg.finetune_mode = mode;
  cfg.seed = derive_seed(seed, "tuning");
  return cfg;
}

void PipelineConfig::validate() const {
  const ModelSpec& spec = find_model_spec(model_name);
  const TuningConfig cfg = resolved_tuning();
  const StrategyKey key = strategy_key(cfg);
  if (spec.capabilities.of(key) == Support::None)
    raise(ErrorCode::UnsupportedStrategy,
          model_name + " does not support strategy '" + std::string(strategy_key_name(key)) + "'");
}

PipelineConfig PipelineConfig::from_config(const ConfigFile& file) {
  PipelineConfig cfg;
  for (const auto& [key, value] : file.values()) {
    if (key == "model_name") {
      cfg.model_name = value;
    } else if (key == "tuning_strategy") {
      cfg.strategy = parse_tuning_strategy(value);
    } else if (key == "seed") {
      cfg.seed = parse_u64(key, value);
    } else if (key == "sampling.method") {
      cfg.sampling.method = parse_resample_method(value);
    } else if (key == "sampling.k_neighbors") {
      cfg.sampling.k_neighbors = parse_count(key, value);
      if (cfg.sampling.k_neighbors == 0) raise(ErrorCode::InvalidConfig, "sampling.k_neighbors must be at least 1");
    } else if (key == "exclude_columns") {
      cfg.exclude_columns = split_list(value);
    } else if (key.starts_with("tuning_params.")) {
      const std::string param = key.substr(std::string("tuning_params.").size());
      if (param == kFinetuneModeKey) {
        cfg.mode = parse_finetune_mode(value);
      } else {
        TuningConfig probe;
        apply_tuning_param(probe, param, value);  // rejects unknown keys early
        cfg.tuning_params[param] = value;
      }
    } else {
      raise(ErrorCode::InvalidConfig, "unknown configuration key '" + key + "'");
    }
  }
  return cfg;
}

ConfigFile PipelineConfig::to_config() const {
  ConfigFile file;
  file.set("model_name", model_name);
  file.set("tuning_strategy", std::string(tuning_strategy_name(strategy)));
  file.set("tuning_params.finetune_mode", std::string(finetune_mode_name(mode)));
  for (const auto& [k, v] : tuning_params) file.set("tuning_params." + k, v);
  file.set("sampling.method", std::string(resample_method_name(sampling.method)));
  if (sampling.k_neighbors > 0) file.set("sampling.k_neighbors", std::to_string(sampling.k_neighbors));
  file.set("seed", std::to_string(seed));
  if (!exclude_columns.empty()) {
    std::string joined;
    for (const auto& c : exclude_columns) joined += (joined.empty() ? "" : ",") + c;
    file.set("exclude_columns", joined);
  }
  return file;
}

CsvOptions PipelineState::csv_options(bool require_target) const {
  CsvOptions opt;
  opt.target_column = target_column;
  opt.require_target = require_target;
  opt.allow_single_class = true;
  for (const auto& col : preprocessor.columns) opt.schema_hints[col.name] = col.kind;
  return opt;
}

PipelineState fit_pipeline(const PipelineConfig& cfg, const Dataset& train, const std::string& target_column) {
  cfg.validate();
  if (!train.has_target()) raise(ErrorCode::MissingTargetColumn, "training data has no target");
  const ModelSpec& spec = find_model_spec(cfg.model_name);
  const Dataset data = train.drop_columns(cfg.exclude_columns);

  PipelineState state;
  state.config = cfg;
  state.target_column = target_column;
  state.class_names = data.class_names();
  state.preprocessor = fit_preprocessor(data, profile_by_name(spec.profile));
  FeatureMatrix x = transform(state.preprocessor, data);

  ResampleSpec sampling = cfg.sampling;
  sampling.seed = derive_seed(cfg.seed, "sampling");
  Resampled rs = resample(x, data.target(), sampling);

  std::unique_ptr<Model> model =
      create_model(cfg.model_name, rs.features.cols, data.n_classes(), derive_seed(cfg.seed, "model"));
  state.metadata = tune(*model, spec, rs.features, rs.labels, cfg.resolved_tuning());
  state.model = std::move(model);
  return state;
}

FeatureMatrix transform_features(const PipelineState& state, const Dataset& data) {
  if (!state.model) raise(ErrorCode::NotFitted, "pipeline has not been fitted");
  return transform(state.preprocessor, data.drop_columns(state.config.exclude_columns));
}

Prediction predict_proba(const PipelineState& state, const Dataset& data) {
  const FeatureMatrix x = transform_features(state, data);
  return Prediction::from_proba(state.model->predict_proba(x));
}

std::vector<int> predict(const PipelineState& state, const Dataset& data) { return predict_proba(state, data).labels; }

std::vector<int> aligned_target(const PipelineState& state, const Dataset& data) {
  if (!data.has_target()) raise(ErrorCode::MissingTargetColumn, "evaluation data has no target column");
  return data.with_class_names(state.class_names).target();
}

MetricsReport evaluate(const PipelineState& state, const Dataset& data) {
  const auto y = aligned_target(state, data);
  return evaluate(predict_proba(state, data), y);
}

MetricsReport evaluate_calibration(const PipelineState& state, const Dataset& data, std::size_t n_bins) {
  const auto y = aligned_target(state, data);
  return evaluate_calibration(predict_proba(state, data), y, n_bins);
}

MetricsReport evaluate_fairness(const PipelineState& state, const Dataset& data, const std::string& sensitive_column,
                                int positive_class) {
  const auto col = data.column_index(sensitive_column);
  if (!col) raise(ErrorCode::SchemaMismatch, "fairness column '" + sensitive_column + "' not found");
  const auto y = aligned_target(state, data);
  std::unordered_map<std::string, int> ids;
  std::vector<int> groups(data.n_rows());
  for (std::size_t r = 0; r < data.n_rows(); ++r)
    groups[r] = ids.try_emplace(data.raw_value(r, *col), static_cast<int>(ids.size())).first->second;
  MetricsReport report = evaluate_fairness(predict_proba(state, data), y, groups, positive_class);
  report.metadata["group_column"] = sensitive_column;
  return report;
}

// Persistence ---------------------------------------------------------------

namespace {

constexpr const char* kParamPrefix = "param/";

json preprocessor_to_json(const PreprocessorState& s) {
  json cols = json::array();
  for (const auto& c : s.columns) {
    json col = {{"name", c.name}, {"kind", c.kind == ColumnKind::Numeric ? "numeric" : "categorical"}};
    if (const auto* n = std::get_if<NumericColumnState>(&c.stats)) {
      col["impute_value"] = n->impute_value;
      col["mean"] = n->mean;
      col["std"] = n->std;
    } else {
      const auto& k = std::get<CategoricalColumnState>(c.stats);
      col["mode_code"] = k.mode_code;
      col["codebook"] = k.codebook;
    }
    cols.push_back(std::move(col));
  }
  return {{"profile", s.profile.name}, {"columns", cols}, {"fitted_on_rows", s.fitted_on_rows}};
}

PreprocessorState preprocessor_from_json(const json& j) {
  PreprocessorState s;
  s.profile = profile_by_name(j.at("profile").get<std::string>());
  s.fitted_on_rows = j.at("fitted_on_rows").get<std::size_t>();
  for (const auto& col : j.at("columns")) {
    ColumnState c;
    c.name = col.at("name").get<std::string>();
    if (col.at("kind").get<std::string>() == "numeric") {
      c.kind = ColumnKind::Numeric;
      c.stats = NumericColumnState{col.at("impute_value").get<double>(), col.at("mean").get<double>(),
                                   col.at("std").get<double>()};
    } else {
      c.kind = ColumnKind::Categorical;
      c.stats = CategoricalColumnState{col.at("mode_code").get<std::uint32_t>(),
                                       col.at("codebook").get<std::vector<std::string>>()};
    }
    s.columns.push_back(std::move(c));
  }
  return s;
}

json metadata_to_json(const FitMetadata& m) {
  json j = {{"strategy", m.strategy},         {"optimizer_steps", m.optimizer_steps}, {"skipped", m.skipped},
            {"executed", m.executed},         {"fit_seconds", m.fit_seconds},          {"final_loss", m.final_loss}};
  if (m.peft) {
    j["peft"] = {{"outcome", m.peft->outcome == PeftOutcome::Attached ? "attached" : "fallback"},
                 {"targets", m.peft->targets},
                 {"trainable_params", m.peft->trainable_params},
                 {"total_params", m.peft->total_params}};
  }
  return j;
}

FitMetadata metadata_from_json(const json& j) {
  FitMetadata m;
  m.strategy = j.at("strategy").get<std::string>();
  m.optimizer_steps = j.at("optimizer_steps").get<std::size_t>();
  m.skipped = j.at("skipped").get<std::size_t>();
  m.executed = j.at("executed").get<std::size_t>();
  m.fit_seconds = j.at("fit_seconds").get<double>();
  m.final_loss = j.at("final_loss").get<double>();
  if (j.contains("peft")) {
    const json& p = j["peft"];
    PeftReport r;
    r.outcome = p.at("outcome").get<std::string>() == "attached" ? PeftOutcome::Attached : PeftOutcome::Fallback;
    r.targets = p.at("targets").get<std::vector<std::string>>();
    r.trainable_params = p.at("trainable_params").get<std::size_t>();
    r.total_params = p.at("total_params").get<std::size_t>();
    m.peft = r;
  }
  return m;
}

}  // namespace

std::vector<std::uint8_t> serialize(const PipelineState& state) {
  if (!state.model) raise(ErrorCode::NotFitted, "cannot save an unfitted pipeline");
  const Model& model = *state.model;
  json header;
  header["format"] = "tabtune-pipeline";
  header["config"] = state.config.to_config().values();
  header["target_column"] = state.target_column;
  header["class_names"] = state.class_names;
  header["preprocessor"] = preprocessor_to_json(state.preprocessor);
  header["metadata"] = metadata_to_json(state.metadata);
  json m = {{"name", model.name()}, {"n_features", model.n_features()}, {"n_classes", model.n_classes()}};
  if (model.lora())
    m["lora"] = {{"rank", model.lora()->rank}, {"alpha", model.lora()->alpha}, {"dropout", model.lora()->dropout}};
  std::vector<std::string> frozen;
  std::vector<NamedTensor> tensors;
  for (const auto& [name, p] : model.params()) {
    if (!p.trainable) frozen.push_back(name);
    tensors.push_back({kParamPrefix + name, p.value});
  }
  m["frozen"] = frozen;
  m["has_context"] = model.has_context();
  header["model"] = m;
  if (model.has_context()) {
    const ContextState& ctx = model.context();
    tensors.push_back({"context/features", Tensor({ctx.features.rows, ctx.features.cols}, ctx.features.data)});
    tensors.push_back({"context/labels", Tensor({ctx.labels.size()}, std::vector<double>(ctx.labels.begin(),
                                                                                        ctx.labels.end()))});
  }
  return encode_container(header.dump(), tensors);
}

PipelineState deserialize(std::span<const std::uint8_t> bytes) {
  ContainerContents contents = decode_container(bytes);
  const json header = json::parse(contents.header_json);
  try {
    PipelineState state;
    ConfigFile cfg;
    for (const auto& [k, v] : header.at("config").items()) cfg.set(k, v.get<std::string>());
    state.config = PipelineConfig::from_config(cfg);
    state.target_column = header.at("target_column").get<std::string>();
    state.class_names = header.at("class_names").get<std::vector<std::string>>();
    state.preprocessor = preprocessor_from_json(header.at("preprocessor"));
    state.metadata = metadata_from_json(header.at("metadata"));

    const json& m = header.at("model");
    std::unique_ptr<Model> model = create_model(m.at("name").get<std::string>(), m.at("n_features").get<std::size_t>(),
                                                m.at("n_classes").get<std::size_t>(), 0);
    std::vector<std::string> names;
    for (const auto& [name, p] : model->params()) names.push_back(name);
    for (const auto& name : names) model->params().erase(name);
    const auto frozen = m.at("frozen").get<std::vector<std::string>>();
    std::optional<Tensor> ctx_features, ctx_labels;
    for (auto& t : contents.tensors) {
      if (t.name.starts_with(kParamPrefix)) {
        const std::string name = t.name.substr(std::string(kParamPrefix).size());
        const bool trainable = std::find(frozen.begin(), frozen.end(), name) == frozen.end();
        model->params().add(name, std::move(t.value), trainable);
      } else if (t.name == "context/features") {
        ctx_features = std::move(t.value);
      } else if (t.name == "context/labels") {
        ctx_labels = std::move(t.value);
      }
    }
    if (m.contains("lora")) {
      const json& l = m["lora"];
      model->set_lora(LoraConfig{l.at("rank").get<std::size_t>(), l.at("alpha").get<double>(),
                                 l.at("dropout").get<double>()});
    }
    if (m.at("has_context").get<bool>()) {
      if (!ctx_features || !ctx_labels) raise(ErrorCode::TruncatedFile, "context tensors missing");
      ContextState ctx;
      ctx.features.rows = ctx_features->rows();
      ctx.features.cols = ctx_features->cols();
      ctx.features.data.assign(ctx_features->values().begin(), ctx_features->values().end());
      for (double v : ctx_labels->values()) ctx.labels.push_back(static_cast<int>(v));
      model->set_context(std::move(ctx));
    }
    state.model = std::move(model);
    return state;
  } catch (const json::exception& e) {
    raise(ErrorCode::ChecksumMismatch, std::string("header fields are inconsistent: ") + e.what());
  }
}

void save(const PipelineState& state, const std::filesystem::path& path) { write_bytes(path, serialize(state)); }

PipelineState load(const std::filesystem::path& path) { return deserialize(read_bytes(path)); }

}  // namespace tabtune
