#include "tabtune/leaderboard.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <thread>

#include "tabtune/error.hpp"

namespace tabtune {

std::vector<double> average_ranks(std::span<const double> values, bool ascending) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ascending ? values[a] < values[b] : values[a] > values[b];
  });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double mean = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = mean;
    i = j;
  }
  return ranks;
}

const std::map<std::string, bool>& rankable_metrics() {
  static const std::map<std::string, bool> kMetrics = {
      {"accuracy", false},
      {"precision", false},
      {"recall", false},
      {"f1_score", false},
      {"roc_auc_score", false},
      {"expected_calibration_error", true},
      {"maximum_calibration_error", true},
      {"brier_score_loss", true},
      {"fit_seconds", true},
      {"predict_seconds", true},
  };
  return kMetrics;
}

bool rank_ascending(const std::string& metric) {
  const auto& m = rankable_metrics();
  auto it = m.find(metric);
  if (it == m.end()) raise(ErrorCode::InvalidArgument, "cannot rank by '" + metric + "'");
  return it->second;
}

std::string strategy_label(const PipelineConfig& cfg) {
  const bool meta = cfg.mode == FinetuneMode::MetaLearning;
  switch (cfg.strategy) {
    case TuningStrategy::Inference: return "inference";
    case TuningStrategy::Finetune: return meta ? "meta-learning" : "sft";
    case TuningStrategy::Peft: return meta ? "peft-meta-learning" : "peft-sft";
  }
  return "inference";
}

namespace {

// Runs body(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  for (auto& th : pool) th.join();
}

LeaderboardEntry run_entry(const std::string& name, PipelineConfig cfg, std::uint64_t board_seed, const Dataset& train,
                           const Dataset& test) {
  LeaderboardEntry e;
  e.display_name = name;
  cfg.seed = derive_seed(board_seed, name);
  e.config = cfg;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    PipelineState state = fit_pipeline(cfg, train);
    const auto t1 = std::chrono::steady_clock::now();
    const auto y = aligned_target(state, test);
    Prediction pred = predict_proba(state, test);
    const auto t2 = std::chrono::steady_clock::now();
    e.fit_seconds = std::chrono::duration<double>(t1 - t0).count();
    e.predict_seconds = std::chrono::duration<double>(t2 - t1).count();
    e.report = evaluate(pred, y);
    e.report.merge(evaluate_calibration(pred, y));
    e.report.values["fit_seconds"] = e.fit_seconds;
    e.report.values["predict_seconds"] = e.predict_seconds;
  } catch (const Error& err) {
    e.error = err.what();
  } catch (const std::exception& err) {
    e.error = std::string("InternalError: ") + err.what();
  }
  return e;
}

void assign_ranks(std::vector<LeaderboardEntry>& entries, const std::string& rank_by, bool ascending) {
  std::vector<std::size_t> ranked;
  std::vector<double> values;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    if (!e.error.empty()) continue;
    if (!e.report.has(rank_by)) {
      e.error = "MetricUnavailable: " + rank_by + " not produced";
      continue;
    }
    ranked.push_back(i);
    values.push_back(e.report.values.at(rank_by));
  }
  const auto ranks = average_ranks(values, ascending);
  for (std::size_t k = 0; k < ranked.size(); ++k) entries[ranked[k]].rank = ranks[k];
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

}  // namespace

std::string Leaderboard::add_model(const std::string& model_name, TuningStrategy strategy, FinetuneMode mode,
                                   std::map<std::string, std::string> tuning_params) {
  PipelineConfig cfg;
  cfg.model_name = model_name;
  cfg.strategy = strategy;
  cfg.mode = mode;
  cfg.tuning_params = std::move(tuning_params);
  return add(std::move(cfg));
}

std::string Leaderboard::add(PipelineConfig cfg, std::string display_name) {
  cfg.validate();
  std::string base = display_name.empty() ? cfg.model_name + "/" + strategy_label(cfg) : std::move(display_name);
  std::string name = base;
  for (std::size_t k = 2;; ++k) {
    auto taken = std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
    if (!taken) break;
    name = base + "#" + std::to_string(k);
  }
  entries_.emplace_back(name, std::move(cfg));
  return name;
}

std::vector<LeaderboardEntry> Leaderboard::run(const Dataset& train, const Dataset& test, const std::string& rank_by,
                                               std::size_t threads) const {
  if (entries_.empty()) raise(ErrorCode::EmptySuite, "leaderboard has no entries");
  const bool ascending = rank_ascending(rank_by);
  std::vector<LeaderboardEntry> out(entries_.size());
  parallel_for(entries_.size(), threads,
               [&](std::size_t i) { out[i] = run_entry(entries_[i].first, entries_[i].second, seed_, train, test); });
  assign_ranks(out, rank_by, ascending);
  std::sort(out.begin(), out.end(), [](const LeaderboardEntry& a, const LeaderboardEntry& b) {
    if (a.rank.has_value() != b.rank.has_value()) return a.rank.has_value();
    if (a.rank && *a.rank != *b.rank) return *a.rank < *b.rank;
    return a.display_name < b.display_name;
  });
  return out;
}

SuiteManifest SuiteManifest::parse(const ConfigFile& file, const std::filesystem::path& base_dir) {
  std::map<std::string, SuiteDataset> by_name;
  std::map<std::string, bool> has_path, has_target;
  for (const auto& [key, value] : file.values()) {
    if (!key.starts_with("dataset.")) raise(ErrorCode::InvalidConfig, "unknown manifest key '" + key + "'");
    const auto dot = key.rfind('.');
    if (dot <= 8) raise(ErrorCode::InvalidConfig, "manifest key '" + key + "' has no dataset name");
    const std::string name = key.substr(8, dot - 8);
    const std::string field = key.substr(dot + 1);
    SuiteDataset& d = by_name[name];
    d.name = name;
    if (field == "path") {
      std::filesystem::path p(value);
      d.path = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
      has_path[name] = true;
    } else if (field == "target") {
      d.target = value;
      has_target[name] = true;
    } else if (field == "test_fraction") {
      d.split.test_fraction = parse_real(key, value);
      if (!(d.split.test_fraction > 0.0 && d.split.test_fraction < 1.0))
        raise(ErrorCode::InvalidConfig, key + " must lie in (0,1)");
    } else if (field == "stratified") {
      d.split.stratified = parse_flag(key, value);
    } else if (field == "seed") {
      d.split.seed = parse_u64(key, value);
    } else {
      raise(ErrorCode::InvalidConfig, "unknown manifest field '" + field + "'");
    }
  }
  SuiteManifest m;
  for (auto& [name, d] : by_name) {
    if (!has_path[name] || !has_target[name])
      raise(ErrorCode::InvalidConfig, "dataset '" + name + "' needs both path and target");
    m.datasets.push_back(std::move(d));
  }
  if (m.datasets.empty()) raise(ErrorCode::EmptySuite, "manifest lists no datasets");
  return m;
}

SuiteManifest SuiteManifest::load(const std::filesystem::path& path) {
  return parse(ConfigFile::load(path), path.parent_path());
}

Leaderboard load_suite_configs(const ConfigFile& file, std::uint64_t seed) {
  std::map<std::string, ConfigFile> sections;
  for (const auto& [key, value] : file.values()) {
    if (!key.starts_with("config.")) raise(ErrorCode::InvalidConfig, "unknown configs key '" + key + "'");
    const auto dot = key.find('.', 7);
    if (dot == std::string::npos || dot == 7) raise(ErrorCode::InvalidConfig, "configs key '" + key + "' has no name");
    sections[key.substr(7, dot - 7)].set(key.substr(dot + 1), value);
  }
  Leaderboard board(seed);
  for (const auto& [name, section] : sections) board.add(PipelineConfig::from_config(section), name);
  if (board.size() == 0) raise(ErrorCode::EmptySuite, "configs file lists no configurations");
  return board;
}

void aggregate_suite(SuiteResult& r) {
  r.common_datasets.clear();
  r.mean_rank.clear();
  r.mean_accuracy.clear();
  r.mean_f1.clear();
  std::vector<std::size_t> common;
  for (std::size_t d = 0; d < r.datasets.size(); ++d) {
    bool all = !r.models.empty();
    for (std::size_t m = 0; m < r.models.size(); ++m) all = all && r.cells[m][d].metric.has_value();
    if (all) {
      common.push_back(d);
      r.common_datasets.push_back(r.datasets[d]);
    }
  }
  if (common.empty()) return;
  const bool ascending = rank_ascending(r.rank_by);
  std::vector<double> rank_sum(r.models.size(), 0.0), acc_sum(r.models.size(), 0.0), f1_sum(r.models.size(), 0.0);
  for (std::size_t d : common) {
    std::vector<double> values;
    for (std::size_t m = 0; m < r.models.size(); ++m) values.push_back(*r.cells[m][d].metric);
    const auto ranks = average_ranks(values, ascending);
    for (std::size_t m = 0; m < r.models.size(); ++m) {
      rank_sum[m] += ranks[m];
      acc_sum[m] += r.cells[m][d].accuracy.value_or(0.0);
      f1_sum[m] += r.cells[m][d].f1.value_or(0.0);
    }
  }
  const double n = static_cast<double>(common.size());
  for (std::size_t m = 0; m < r.models.size(); ++m) {
    r.mean_rank[r.models[m]] = rank_sum[m] / n;
    r.mean_accuracy[r.models[m]] = acc_sum[m] / n;
    r.mean_f1[r.models[m]] = f1_sum[m] / n;
  }
}

SuiteResult run_suite(const Leaderboard& board,
                      const std::vector<std::pair<std::string, std::pair<Dataset, Dataset>>>& splits,
                      const std::string& rank_by, std::size_t threads) {
  if (splits.empty()) raise(ErrorCode::EmptySuite, "suite has no datasets");
  if (board.size() == 0) raise(ErrorCode::EmptySuite, "suite has no configurations");
  const bool ascending = rank_ascending(rank_by);

  SuiteResult r;
  r.rank_by = rank_by;
  std::vector<std::size_t> model_order(board.size());
  std::iota(model_order.begin(), model_order.end(), 0);
  std::sort(model_order.begin(), model_order.end(),
            [&](std::size_t a, std::size_t b) { return board.entries()[a].first < board.entries()[b].first; });
  for (std::size_t i : model_order) {
    r.models.push_back(board.entries()[i].first);
    r.strategies.push_back(strategy_label(board.entries()[i].second));
  }
  for (const auto& [name, split] : splits) r.datasets.push_back(name);

  const std::size_t n_models = r.models.size(), n_data = r.datasets.size();
  std::vector<LeaderboardEntry> runs(n_models * n_data);
  parallel_for(runs.size(), threads, [&](std::size_t job) {
    const std::size_t m = job / n_data, d = job % n_data;
    const auto& [name, cfg] = board.entries()[model_order[m]];
    runs[job] = run_entry(name, cfg, board.seed(), splits[d].second.first, splits[d].second.second);
  });

  r.cells.assign(n_models, std::vector<SuiteCell>(n_data));
  bool any_ok = false;
  for (std::size_t d = 0; d < n_data; ++d) {
    std::vector<LeaderboardEntry> column;
    for (std::size_t m = 0; m < n_models; ++m) column.push_back(runs[m * n_data + d]);
    assign_ranks(column, rank_by, ascending);
    for (std::size_t m = 0; m < n_models; ++m) {
      const LeaderboardEntry& e = column[m];
      SuiteCell& c = r.cells[m][d];
      c.error = e.error;
      c.rank = e.rank;
      if (e.rank) {
        any_ok = true;
        c.metric = e.report.values.at(rank_by);
        if (e.report.has("accuracy")) c.accuracy = e.report.values.at("accuracy");
        if (e.report.has("f1_score")) c.f1 = e.report.values.at("f1_score");
      }
    }
  }
  if (!any_ok) raise(ErrorCode::AllRunsFailed, "no configuration succeeded on any dataset");
  aggregate_suite(r);
  return r;
}

SuiteResult run_suite(const Leaderboard& board, const SuiteManifest& manifest, const std::string& rank_by,
                      std::size_t threads) {
  if (manifest.datasets.empty()) raise(ErrorCode::EmptySuite, "manifest lists no datasets");
  rank_ascending(rank_by);
  std::vector<std::pair<std::string, std::pair<Dataset, Dataset>>> splits;
  for (const auto& d : manifest.datasets) {
    CsvOptions opt;
    opt.target_column = d.target;
    splits.emplace_back(d.name, train_test_split(load_csv(d.path, opt), d.split));
  }
  return run_suite(board, splits, rank_by, threads);
}

std::string SuiteResult::results_csv() const {
  std::string out = "dataset,config,strategy," + rank_by + ",accuracy,f1_score,rank,status\n";
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    for (std::size_t m = 0; m < models.size(); ++m) {
      const SuiteCell& c = cells[m][d];
      std::string status = c.error.empty() ? "ok" : c.error.substr(0, c.error.find(':'));
      out += datasets[d] + "," + models[m] + "," + strategies[m] + "," + fmt(c.metric) + "," + fmt(c.accuracy) + "," +
             fmt(c.f1) + "," + fmt(c.rank) + "," + status + "\n";
    }
  }
  return out;
}

std::string SuiteResult::summary_text(const std::string& timestamp) const {
  std::string out = "# tabtune benchmark summary, generated " + timestamp + "\n";
  out += "rank_by: " + rank_by + "\n";
  out += "common datasets (" + std::to_string(common_datasets.size()) + "/" + std::to_string(datasets.size()) + "):";
  for (const auto& d : common_datasets) out += " " + d;
  out += "\n";
  std::set<std::string> groups(strategies.begin(), strategies.end());
  std::size_t width = 6;
  for (const auto& m : models) width = std::max(width, m.size());
  char line[512];
  for (const auto& g : groups) {
    out += "\n[" + g + "]\n";
    std::snprintf(line, sizeof line, "%-*s  %9s  %9s  %9s\n", static_cast<int>(width), "config", "mean_rank", "mean_acc",
                  "mean_f1");
    out += line;
    for (std::size_t m = 0; m < models.size(); ++m) {
      if (strategies[m] != g) continue;
      auto get = [&](const std::map<std::string, double>& v) {
        auto it = v.find(models[m]);
        return it == v.end() ? std::string("n/a") : fmt(std::round(it->second * 1e4) / 1e4);
      };
      std::snprintf(line, sizeof line, "%-*s  %9s  %9s  %9s\n", static_cast<int>(width), models[m].c_str(),
                    get(mean_rank).c_str(), get(mean_accuracy).c_str(), get(mean_f1).c_str());
      out += line;
    }
  }
  return out;
}

}  // namespace tabtune
