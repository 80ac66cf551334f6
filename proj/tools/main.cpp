// tabtune: fit, predict, evaluate and rank tabular in-context learners.
//
// Standard output carries data only; diagnostics go to standard error.
// Exit codes: 0 ok, 2 usage, 3 data, 4 training.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tabtune/config.hpp"
#include "tabtune/container.hpp"
#include "tabtune/dataset.hpp"
#include "tabtune/error.hpp"
#include "tabtune/leaderboard.hpp"
#include "tabtune/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tabtune;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitTraining = 4;

std::string fmt_real(double v, int digits = 9) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// Writes to `path`, or standard output when empty.
void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path);
  out << text;
}

struct FitArgs {
  std::string data, target, model, strategy, mode, resample, config, out;
  std::vector<std::string> set, exclude;
  std::optional<std::uint64_t> seed;
};

PipelineConfig build_pipeline_config(const FitArgs& a) {
  ConfigFile file = a.config.empty() ? ConfigFile{} : ConfigFile::load(a.config);
  if (!a.model.empty()) file.set("model_name", a.model);
  if (!a.strategy.empty()) file.set("tuning_strategy", a.strategy);
  if (!a.mode.empty()) file.set("tuning_params.finetune_mode", a.mode);
  if (!a.resample.empty()) file.set("sampling.method", a.resample);
  if (a.seed) file.set("seed", std::to_string(*a.seed));
  if (!a.exclude.empty()) {
    std::string joined;
    for (const auto& c : a.exclude) joined += (joined.empty() ? "" : ",") + c;
    file.set("exclude_columns", joined);
  }
  for (const auto& kv : a.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) raise(ErrorCode::InvalidArgument, "--set expects key=value, got '" + kv + "'");
    std::string key = kv.substr(0, eq);
    if (key.find('.') == std::string::npos && key != "model_name" && key != "tuning_strategy" && key != "seed")
      key = "tuning_params." + key;
    file.set(key, kv.substr(eq + 1));
  }
  return PipelineConfig::from_config(file);
}

int cmd_fit(const FitArgs& a) {
  const PipelineConfig cfg = build_pipeline_config(a);
  cfg.validate();
  CsvOptions opt;
  opt.target_column = a.target;
  const Dataset train = load_csv(a.data, opt);
  const PipelineState state = fit_pipeline(cfg, train, a.target);
  save(state, a.out);

  const FitMetadata& m = state.metadata;
  std::cout << "model=" << cfg.model_name << "\n"
            << "strategy=" << m.strategy << "\n"
            << "train_rows=" << train.n_rows() << "\n"
            << "features=" << state.model->n_features() << "\n"
            << "classes=" << state.class_names.size() << "\n"
            << "optimizer_steps=" << m.optimizer_steps << "\n"
            << "executed_batches=" << m.executed << "\n"
            << "skipped_episodes=" << m.skipped << "\n"
            << "final_loss=" << fmt_real(m.final_loss) << "\n";
  if (m.peft) {
    std::cout << "peft_outcome=" << (m.peft->outcome == PeftOutcome::Attached ? "attached" : "fallback") << "\n"
              << "peft_targets=" << m.peft->targets.size() << "\n"
              << "trainable_params=" << m.peft->trainable_params << "\n"
              << "total_params=" << m.peft->total_params << "\n"
              << "trainable_fraction=" << fmt_real(m.peft->trainable_fraction()) << "\n";
  }
  std::cerr << "saved " << a.out << " (" << fmt_real(m.fit_seconds, 3) << " s)\n";
  return 0;
}

struct PredictArgs {
  std::string model_file, data, out;
  bool proba = false;
};

int cmd_predict(const PredictArgs& a) {
  const PipelineState state = load(a.model_file);
  const Dataset data = load_csv(a.data, state.csv_options(false));
  const Prediction pred = predict_proba(state, data);
  std::string text;
  if (a.proba) {
    text = "row";
    for (std::size_t k = 0; k < pred.n_classes(); ++k) text += ",p" + std::to_string(k);
    text += "\n";
    for (std::size_t i = 0; i < pred.rows(); ++i) {
      text += std::to_string(i);
      for (double p : pred.proba.row(i)) text += "," + fmt_real(p);
      text += "\n";
    }
  } else {
    text = "row,label\n";
    for (std::size_t i = 0; i < pred.rows(); ++i)
      text += std::to_string(i) + "," + state.class_names[static_cast<std::size_t>(pred.labels[i])] + "\n";
  }
  emit(text, a.out);
  return 0;
}

struct EvaluateArgs {
  std::string model_file, data, fairness_col;
  bool calibration = false;
  std::size_t bins = 15;
  int positive_class = 1;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const PipelineState state = load(a.model_file);
  const Dataset data = load_csv(a.data, state.csv_options(true));
  MetricsReport report = evaluate(state, data);
  if (a.calibration) report.merge(evaluate_calibration(state, data, a.bins));
  if (!a.fairness_col.empty()) report.merge(evaluate_fairness(state, data, a.fairness_col, a.positive_class));
  std::size_t width = 0;
  for (const auto& [k, v] : report.values) width = std::max(width, k.size());
  for (const auto& [k, v] : report.values)
    std::cout << k << std::string(width - k.size() + 2, ' ') << fmt_real(v, 10) << "\n";
  for (const auto& [k, v] : report.metadata) std::cerr << "# " << k << ": " << v << "\n";
  return 0;
}

struct LeaderboardArgs {
  std::string data, test, target, configs, rank_by = "accuracy";
  double test_fraction = 0.25;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

int cmd_leaderboard(const LeaderboardArgs& a) {
  rank_ascending(a.rank_by);
  const Leaderboard board = load_suite_configs(ConfigFile::load(a.configs), a.seed);
  CsvOptions opt;
  opt.target_column = a.target;
  Dataset train, test;
  if (a.test.empty()) {
    std::tie(train, test) = train_test_split(load_csv(a.data, opt), SplitSpec{a.test_fraction, true, a.seed});
  } else {
    train = load_csv(a.data, opt);
    opt.allow_single_class = true;
    test = load_csv(a.test, opt);
  }
  const auto entries = board.run(train, test, a.rank_by, a.threads);
  std::cout << "rank,config,strategy," << a.rank_by << ",accuracy,f1_score,roc_auc_score,status\n";
  for (const auto& e : entries) {
    auto val = [&](const std::string& k) { return e.report.has(k) ? fmt_real(e.report.values.at(k), 10) : ""; };
    std::cout << (e.rank ? fmt_real(*e.rank) : "") << "," << e.display_name << "," << strategy_label(e.config) << ","
              << val(a.rank_by) << "," << val("accuracy") << "," << val("f1_score") << "," << val("roc_auc_score")
              << "," << (e.error.empty() ? "ok" : e.error.substr(0, e.error.find(':'))) << "\n";
    if (!e.error.empty()) std::cerr << e.display_name << ": " << e.error << "\n";
  }
  return 0;
}

struct BenchmarkArgs {
  std::string suite, configs, out, rank_by = "accuracy";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int cmd_benchmark(const BenchmarkArgs& a) {
  rank_ascending(a.rank_by);
  const SuiteManifest manifest = SuiteManifest::load(a.suite);
  const Leaderboard board = load_suite_configs(ConfigFile::load(a.configs), a.seed);
  const SuiteResult result = run_suite(board, manifest, a.rank_by, a.threads);
  fs::create_directories(a.out);
  emit(result.results_csv(), (fs::path(a.out) / "results.csv").string());
  const std::string summary = result.summary_text(utc_timestamp());
  emit(summary, (fs::path(a.out) / "summary.txt").string());
  std::cout << summary;
  for (std::size_t m = 0; m < result.models.size(); ++m)
    for (std::size_t d = 0; d < result.datasets.size(); ++d)
      if (!result.cells[m][d].error.empty())
        std::cerr << result.models[m] << " on " << result.datasets[d] << ": " << result.cells[m][d].error << "\n";
  return 0;
}

std::string support_cell(Support s) { return std::string(1, support_symbol(s)); }

int cmd_models(bool reference) {
  std::cout << "Strategy support (Y = full, * = experimental, - = none)\n";
  std::cout << "model                inference  sft  meta  peft_sft  peft_meta  profile\n";
  char line[256];
  for (const auto& s : model_registry()) {
    const auto& c = s.capabilities;
    std::snprintf(line, sizeof line, "%-20s %9s  %3s  %4s  %8s  %9s  %s\n", s.name.c_str(),
                  support_cell(c.inference).c_str(), support_cell(c.sft).c_str(), support_cell(c.meta).c_str(),
                  support_cell(c.peft_sft).c_str(), support_cell(c.peft_meta).c_str(), s.profile.c_str());
    std::cout << line;
  }
  std::cout << "\nDefaults\n";
  for (const auto& s : model_registry()) {
    std::cout << s.name << ": " << s.description << "\n";
    for (const auto& [key, params] : s.defaults) {
      std::string row;
      for (const auto& [k, v] : params) row += (row.empty() ? "" : ", ") + k + "=" + v;
      std::cout << "  " << strategy_key_name(key) << ": " << row << "\n";
    }
  }
  if (!reference) return 0;
  std::cout << "\nReference foundation models (published defaults; not runnable)\n";
  for (const auto& r : reference_models()) {
    const auto& c = r.capabilities;
    std::cout << r.name << " [" << r.paradigm << "] sft=" << support_symbol(c.sft) << " meta=" << support_symbol(c.meta)
              << " peft_sft=" << support_symbol(c.peft_sft) << " peft_meta=" << support_symbol(c.peft_meta) << "\n";
    for (const auto& [key, text] : r.defaults) std::cout << "  " << strategy_key_name(key) << ": " << text << "\n";
  }
  return 0;
}

int exit_code_for(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Usage: return kExitUsage;
    case ErrorCategory::Data: return kExitData;
    case ErrorCategory::Training: return kExitTraining;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tabtune: adapt and evaluate tabular in-context learners"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "preprocess, tune and save a pipeline");
  fit_cmd->add_option("--data", fit.data, "training CSV")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--target", fit.target, "target column")->required();
  fit_cmd->add_option("--model", fit.model, "registered model name");
  fit_cmd->add_option("--strategy", fit.strategy, "inference | finetune | peft");
  fit_cmd->add_option("--mode", fit.mode, "sft | meta-learning");
  fit_cmd->add_option("--resample", fit.resample, "none | smote | random_over | random_under | tomek | kmeans | knn");
  fit_cmd->add_option("--seed", fit.seed, "random seed");
  fit_cmd->add_option("--config", fit.config, "config file (flags override it)")->check(CLI::ExistingFile);
  fit_cmd->add_option("--set", fit.set, "tuning override key=value (repeatable)");
  fit_cmd->add_option("--exclude,--exclude-sensitive", fit.exclude, "column to drop from the features (repeatable)");
  fit_cmd->add_option("--out", fit.out, "output pipeline file")->required();

  PredictArgs pred;
  auto* pred_cmd = app.add_subcommand("predict", "predict labels or probabilities");
  pred_cmd->add_option("--model-file", pred.model_file, "saved pipeline")->required()->check(CLI::ExistingFile);
  pred_cmd->add_option("--data", pred.data, "CSV to predict")->required()->check(CLI::ExistingFile);
  pred_cmd->add_option("--out", pred.out, "output CSV (default: standard output)");
  pred_cmd->add_flag("--proba", pred.proba, "emit class probabilities");

  EvaluateArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "performance, calibration and fairness metrics");
  eval_cmd->add_option("--model-file", eval.model_file, "saved pipeline")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval.data, "labelled CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_flag("--calibration", eval.calibration, "add ECE, MCE and Brier score");
  eval_cmd->add_option("--bins", eval.bins, "calibration bins")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--fairness-col", eval.fairness_col, "sensitive attribute column");
  eval_cmd->add_option("--positive-class", eval.positive_class, "positive class index")->check(CLI::NonNegativeNumber);

  LeaderboardArgs lb;
  auto* lb_cmd = app.add_subcommand("leaderboard", "train and rank several configurations on one dataset");
  lb_cmd->add_option("--data", lb.data, "training CSV (split when --test is absent)")->required()->check(CLI::ExistingFile);
  lb_cmd->add_option("--test", lb.test, "held-out CSV")->check(CLI::ExistingFile);
  lb_cmd->add_option("--target", lb.target, "target column")->required();
  lb_cmd->add_option("--configs", lb.configs, "configurations file")->required()->check(CLI::ExistingFile);
  lb_cmd->add_option("--rank-by", lb.rank_by, "metric to rank by");
  lb_cmd->add_option("--test-fraction", lb.test_fraction, "held-out fraction when splitting")->check(CLI::Range(0.0, 1.0));
  lb_cmd->add_option("--seed", lb.seed, "suite seed");
  lb_cmd->add_option("--threads", lb.threads, "parallel entries (0 = all cores)");

  BenchmarkArgs bench;
  auto* bench_cmd = app.add_subcommand("benchmark", "multi-dataset suite with mean-rank aggregation");
  bench_cmd->add_option("--suite", bench.suite, "suite manifest")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--configs", bench.configs, "configurations file")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--rank-by", bench.rank_by, "metric to rank by");
  bench_cmd->add_option("--out", bench.out, "output directory")->required();
  bench_cmd->add_option("--seed", bench.seed, "suite seed");
  bench_cmd->add_option("--threads", bench.threads, "parallel runs (0 = all cores)");

  bool reference = false;
  auto* models_cmd = app.add_subcommand("models", "list models, strategy support and defaults");
  models_cmd->add_flag("--reference", reference, "also list the published foundation-model defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*fit_cmd) return cmd_fit(fit);
    if (*pred_cmd) return cmd_predict(pred);
    if (*eval_cmd) return cmd_evaluate(eval);
    if (*lb_cmd) return cmd_leaderboard(lb);
    if (*bench_cmd) return cmd_benchmark(bench);
    if (*models_cmd) return cmd_models(reference);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
