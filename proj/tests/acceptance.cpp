// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails. Tolerances are pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tabtune/autodiff.hpp"
#include "tabtune/baselines.hpp"
#include "tabtune/container.hpp"
#include "tabtune/error.hpp"
#include "tabtune/leaderboard.hpp"
#include "tabtune/metrics.hpp"
#include "tabtune/minicl.hpp"
#include "tabtune/pipeline.hpp"
#include "tabtune/tuning.hpp"

using namespace tabtune;

namespace {

constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 30.0;
constexpr std::uint64_t kGradSeeds = 5;
constexpr std::size_t kEpisodeDraws = 10000;
constexpr double kSkipTol = 0.03;
constexpr double kMetricTol = 1e-12;
constexpr std::size_t kRandomPredictionSets = 1000;
constexpr std::size_t kRandomRankTables = 1000;
constexpr double kMetaAccuracy = 0.90;
constexpr double kKnnAccuracy = 0.95;
constexpr double kLearningSeconds = 120.0;
constexpr std::size_t kRoundTrips = 1000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Records the first violation; later checks only add detail when passing.
struct Checker {
  bool ok = true;
  std::string failure;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      failure = what;
    }
  }
};

FeatureMatrix random_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  FeatureMatrix m(rows, cols);
  for (double& v : m.data) v = std::normal_distribution<double>()(rng);
  return m;
}

std::vector<int> random_labels(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(uniform_index(rng, k));
  return y;
}

std::string num(double v, const char* f = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1. Gradient correctness --------------------------------------------------

using Build = std::function<Var(Tape&, ParamStore&)>;

oracle::FdResult check_op(ParamStore store, const Build& build, std::uint64_t seed) {
  Rng rng(seed);
  Tensor weights;
  {
    Tape t(false);
    weights = random_normal(build(t, store).value().shape(), 1.0, rng);
  }
  auto scalar = [&](Tape& t) { return ops::sum(ops::mul_const(build(t, store), weights)); };
  store.zero_grad();
  {
    Tape t;
    t.backward(scalar(t));
  }
  return oracle::finite_difference_check(store, [&] {
    Tape t(false);
    return scalar(t).value()[0];
  });
}

ParamStore inputs(std::uint64_t seed, const std::vector<std::pair<std::string, std::vector<std::size_t>>>& shapes) {
  Rng rng(seed);
  ParamStore s;
  for (const auto& [name, shape] : shapes) s.add(name, random_normal(shape, 1.0, rng));
  return s;
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t checks = 0;
  auto track = [&](const std::string& op, const oracle::FdResult& r) {
    ++checks;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = op + ":" + r.worst;
    }
  };
  for (std::uint64_t seed = 0; seed < kGradSeeds; ++seed) {
    Rng rng(seed + 100);
    const Tensor mask = random_normal({4, 5}, 1.0, rng);
    AttentionMask att{5, 6, std::vector<std::uint8_t>(30)};
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 6; ++j) att.allowed[i * 6 + j] = uniform01(rng) < 0.6;
      att.allowed[i * 6 + uniform_index(rng, 6)] = 1;
    }
    const std::vector<std::size_t> ids{2, 0, 2, 3, 1};
    const std::vector<int> targets{0, 2, 1, 2};
    const std::vector<std::uint8_t> valid{1, 1, 1, 0, 0};
    track("matmul", check_op(inputs(seed, {{"a", {3, 4}}, {"b", {4, 2}}}),
                             [](Tape& t, ParamStore& s) { return ops::matmul(t.param(s, "a"), t.param(s, "b")); }, seed));
    track("linear", check_op(inputs(seed, {{"x", {3, 4}}, {"w", {5, 4}}}),
                             [](Tape& t, ParamStore& s) { return ops::linear(t.param(s, "x"), t.param(s, "w")); }, seed));
    track("add/add_row/scale", check_op(inputs(seed, {{"a", {3, 4}}, {"b", {3, 4}}, {"bias", {4}}}),
                                        [](Tape& t, ParamStore& s) {
                                          Var sum = ops::add(t.param(s, "a"), t.param(s, "b"));
                                          return ops::scale(ops::add_row(sum, t.param(s, "bias")), -1.7);
                                        },
                                        seed));
    track("mul_const/relu", check_op(inputs(seed, {{"a", {4, 5}}}),
                                     [&](Tape& t, ParamStore& s) { return ops::relu(ops::mul_const(t.param(s, "a"), mask)); },
                                     seed));
    track("sum", check_op(inputs(seed, {{"a", {3, 3}}}),
                          [](Tape& t, ParamStore& s) { return ops::sum(ops::relu(t.param(s, "a"))); }, seed));
    track("layer_norm", check_op(inputs(seed, {{"x", {4, 6}}, {"g", {6}}, {"b", {6}}}),
                                 [](Tape& t, ParamStore& s) {
                                   return ops::layer_norm(t.param(s, "x"), t.param(s, "g"), t.param(s, "b"));
                                 },
                                 seed));
    track("softmax", check_op(inputs(seed, {{"a", {3, 5}}}),
                              [](Tape& t, ParamStore& s) { return ops::softmax(t.param(s, "a")); }, seed));
    track("attention", check_op(inputs(seed, {{"q", {5, 8}}, {"k", {6, 8}}, {"v", {6, 8}}}),
                                [&](Tape& t, ParamStore& s) {
                                  return ops::attention(t.param(s, "q"), t.param(s, "k"), t.param(s, "v"), att, 2);
                                },
                                seed));
    track("embedding/slice", check_op(inputs(seed, {{"table", {4, 3}}}),
                                      [&](Tape& t, ParamStore& s) {
                                        return ops::slice_rows(ops::embedding_lookup(t.param(s, "table"), ids), 1, 3);
                                      },
                                      seed));
    track("cross_entropy", check_op(inputs(seed, {{"z", {4, 5}}}),
                                    [&](Tape& t, ParamStore& s) { return ops::cross_entropy(t.param(s, "z"), targets, valid); },
                                    seed));

    MiniIcl model(3, 3, MiniIclArch{}, seed);
    Rng erng(seed);
    const FeatureMatrix sx = random_rows(4, 3, erng), qx = random_rows(2, 3, erng);
    const std::vector<int> sy{0, 1, 2, 1}, qy{2, 0};
    auto loss = [&](Tape& t) { return model.episode_loss(t, sx, sy, qx, qy, 3, false, nullptr); };
    model.params().zero_grad();
    {
      Tape t;
      t.backward(loss(t));
    }
    track("miniicl_loss", oracle::finite_difference_check(model.params(), [&] {
            Tape t(false);
            return loss(t).value()[0];
          }));
  }
  const double secs = seconds_since(t0);
  return {worst < kGradTol && secs < kGradSeconds,
          std::to_string(checks) + " checks, max rel err " + num(worst) + " (" + worst_name + ") < " + num(kGradTol) +
              ", " + num(secs, "%.1f") + " s < " + num(kGradSeconds, "%.0f") + " s"};
}

// 2. LoRA identity and counting --------------------------------------------

Outcome lora_identity_and_counting() {
  Checker c;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    MiniIcl model(4, 3, MiniIclArch{}, seed);
    const FeatureMatrix sx = random_rows(12, 4, rng), qx = random_rows(7, 4, rng);
    const auto sy = random_labels(12, 3, rng);
    const Tensor before = model.query_logits(sx, sy, qx, 3);
    attach_lora(model, LoraConfig{}, seed);
    c.expect(model.query_logits(sx, sy, qx, 3) == before, "post-attach logits differ, seed " + std::to_string(seed));
  }
  std::size_t counted = 0;
  for (std::size_t d_in : {1u, 2u, 7u}) {
    for (std::size_t r : {1u, 4u, 8u}) {
      MiniIcl model(d_in, 2, MiniIclArch{}, 1);
      const MiniIclArch a = model.arch();
      LoraConfig cfg;
      cfg.rank = r;
      const PeftReport rep = attach_lora(model, cfg, 1);
      // Σ r(n_in + n_out) over the four attention projections per layer,
      // plus the head weight and bias.
      const std::size_t expected = 4 * a.n_layers * r * (a.d_model + a.d_model) + a.k_max * a.d_model + a.k_max;
      c.expect(rep.trainable_params == expected && model.params().trainable_count() == expected,
               "trainable count " + std::to_string(rep.trainable_params) + " != " + std::to_string(expected));
      counted = rep.trainable_params;
    }
  }
  const Dataset d = make_synthetic(40, 3, 3, 0.5, 6);
  const auto [train, test] = train_test_split(d, SplitSpec{0.25, true, 6});
  const auto st = fit_preprocessor(train, profile_by_name(find_model_spec("LogisticRegression").profile));
  const FeatureMatrix xtr = transform(st, train), xte = transform(st, test);
  const ModelSpec& spec = find_model_spec("LogisticRegression");
  TuningConfig sft = default_tuning_config(spec, TuningStrategy::Finetune, FinetuneMode::Sft);
  sft.seed = 99;
  TuningConfig peft = sft;
  peft.strategy = TuningStrategy::Peft;
  auto a = create_model(spec.name, xtr.cols, 3, 8), b = create_model(spec.name, xtr.cols, 3, 8);
  tune(*a, spec, xtr, train.target(), sft);
  const FitMetadata m = tune(*b, spec, xtr, train.target(), peft);
  c.expect(m.peft && m.peft->outcome == PeftOutcome::Fallback, "logistic PEFT did not fall back");
  c.expect(fingerprint(a->params()) == fingerprint(b->params()) && a->predict_proba(xte) == b->predict_proba(xte),
           "fallback differs from plain SFT");
  return {c.ok, c.ok ? "5/5 bit-identical attaches, 9 closed-form counts (r=8: " + std::to_string(counted) +
                           "), logistic fallback bit-equal to SFT"
                     : c.failure};
}

// 3. Episodic mechanics ----------------------------------------------------

Outcome episodic_mechanics() {
  const std::vector<std::size_t> counts{10, 10, 10};
  const std::size_t s = 6, q = 4;
  std::vector<int> y;
  for (std::size_t k = 0; k < counts.size(); ++k) y.insert(y.end(), counts[k], static_cast<int>(k));
  Rng rng(derive_seed(42, "acceptance-episodes"));
  std::size_t skipped = 0, violations = 0;
  for (std::size_t i = 0; i < kEpisodeDraws; ++i) {
    const auto ep = sample_episode(y, s, q, rng);
    if (!ep) {
      ++skipped;
      continue;
    }
    // Independent checks: disjoint rows, remap onto 0..m-1 ascending.
    std::set<std::size_t> rows(ep->support.begin(), ep->support.end());
    bool ok = rows.size() == s && ep->query.size() == q;
    for (std::size_t r : ep->query) ok = ok && rows.insert(r).second;
    std::set<int> support_classes;
    for (std::size_t r : ep->support) support_classes.insert(y[r]);
    int next = 0;
    for (int cls : support_classes) {
      auto it = ep->label_map.find(cls);
      ok = ok && it != ep->label_map.end() && it->second == next++;
    }
    ok = ok && ep->label_map.size() == support_classes.size();
    for (std::size_t r : ep->query) ok = ok && support_classes.contains(y[r]);
    if (!ok) ++violations;
  }
  const double rate = static_cast<double>(skipped) / kEpisodeDraws;
  const double expected = oracle::skip_probability(counts, s, q);
  return {violations == 0 && std::abs(rate - expected) <= kSkipTol,
          std::to_string(kEpisodeDraws) + " draws, " + std::to_string(violations) + " violations, skip rate " +
              num(rate, "%.4f") + " vs oracle " + num(expected, "%.4f") + " (tol " + num(kSkipTol) + ")"};
}

// 4. Leakage invariants ----------------------------------------------------

Outcome leakage_invariants() {
  Checker c;
  for (std::uint64_t ep = 0; ep < 20; ++ep) {
    Rng rng(ep);
    MiniIcl model(4, 3, MiniIclArch{}, ep);
    const FeatureMatrix sx = random_rows(8, 4, rng), qx = random_rows(5, 4, rng);
    const auto sy = random_labels(8, 3, rng);
    const Tensor base = model.query_logits(sx, sy, qx, 3);
    for (std::size_t j = 0; j < qx.rows; ++j) {
      FeatureMatrix moved = qx;
      for (std::size_t col = 0; col < moved.cols; ++col) moved(j, col) += 3.0;
      const Tensor out = model.query_logits(sx, sy, moved, 3);
      for (std::size_t i = 0; i < qx.rows; ++i) {
        if (i == j) continue;
        const auto a = base.row(i), b = out.row(i);
        c.expect(std::equal(a.begin(), a.end(), b.begin(), b.end()), "query row influenced another query row");
      }
    }
  }

  // Editing every test-row feature in the raw data must not move any
  // train-side state. Labels are kept so the split indices stay fixed.
  const Dataset full = make_synthetic(40, 3, 4, 0.5, 11);
  const SplitSpec spec{0.25, true, 11};
  const auto idx = split_indices(full, spec);
  std::vector<Cell> cells = full.cells();
  for (std::size_t r : idx.test)
    for (std::size_t col = 0; col < full.n_cols(); ++col)
      if (auto* v = std::get_if<double>(&cells[r * full.n_cols() + col])) *v = *v * 100.0 + 7.0;
  const Dataset edited = Dataset::create(full.schema(), cells, full.target(), full.class_names());
  PipelineConfig cfg;
  cfg.model_name = "MiniICL";
  cfg.strategy = TuningStrategy::Finetune;
  cfg.mode = FinetuneMode::MetaLearning;
  cfg.tuning_params = {{"epochs", "1"}, {"n_episodes", "5"}, {"support_size", "16"}, {"query_size", "8"}};
  cfg.sampling.method = ResampleMethod::Smote;
  cfg.seed = 4;
  const auto [train_a, test_a] = train_test_split(full, spec);
  const auto [train_b, test_b] = train_test_split(edited, spec);
  c.expect(!(test_a == test_b), "edit did not reach the test split");
  const PipelineState a = fit_pipeline(cfg, train_a), b = fit_pipeline(cfg, train_b);
  c.expect(fingerprint(a.preprocessor) == fingerprint(b.preprocessor), "preprocessor state moved with test edits");
  c.expect(fingerprint(a.model->params()) == fingerprint(b.model->params()), "model state moved with test edits");

  PipelineConfig plain;
  plain.model_name = "KNN";
  const std::uint64_t test_hash = fingerprint(transform_features(fit_pipeline(plain, train_a), test_a));
  std::size_t methods = 0;
  for (auto method : {ResampleMethod::Smote, ResampleMethod::RandomOver, ResampleMethod::RandomUnder,
                      ResampleMethod::Tomek, ResampleMethod::KMeansCentroids, ResampleMethod::NeighborhoodCleaning}) {
    PipelineConfig r = plain;
    r.sampling.method = method;
    c.expect(fingerprint(transform_features(fit_pipeline(r, train_a), test_a)) == test_hash,
             std::string("test matrix changed under ") + std::string(resample_method_name(method)));
    ++methods;
  }
  return {c.ok, c.ok ? "20 episodes x 5 perturbations bit-identical; train state hash unchanged by test edits; "
                       "test matrix hash identical under " + std::to_string(methods) + " resamplers"
                     : c.failure};
}

// 5. Metric oracle equivalence ---------------------------------------------

Prediction from_rows(std::size_t n, std::size_t k, Rng& rng) {
  Tensor t = Tensor::matrix(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0;
    for (std::size_t c = 0; c < k; ++c) total += t.at(i, c) = static_cast<double>(1 + uniform_index(rng, 5));
    for (std::size_t c = 0; c < k; ++c) t.at(i, c) /= total;
  }
  return Prediction::from_proba(std::move(t));
}

Prediction binary(const std::vector<double>& p1) {
  Tensor t = Tensor::matrix(p1.size(), 2);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    t.at(i, 0) = 1.0 - p1[i];
    t.at(i, 1) = p1[i];
  }
  return Prediction::from_proba(std::move(t));
}

Outcome metric_equivalence() {
  double worst = 0.0;
  std::size_t fixtures = 0;
  auto gap = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  Checker c;
  auto compare = [&](const Prediction& p, const std::vector<int>& y, const std::vector<int>& g, std::size_t bins) {
    ++fixtures;
    const std::size_t k = p.n_classes();
    const auto r = evaluate(p, y);
    gap(r.at("accuracy"), oracle::accuracy(y, p.labels));
    gap(r.at("f1_score"), oracle::weighted_f1(y, p.labels, k));
    const double auc = oracle::auc(p.proba, y);
    if (std::isnan(auc))
      c.expect(!r.has("roc_auc_score"), "AUC reported where the oracle finds it undefined");
    else
      gap(r.at("roc_auc_score"), auc);
    const auto cal = evaluate_calibration(p, y, bins);
    const auto oc = oracle::calibration(p.proba, y, bins);
    gap(cal.at("expected_calibration_error"), oc.ece);
    gap(cal.at("maximum_calibration_error"), oc.mce);
    gap(cal.at("brier_score_loss"), oc.brier);
    if (std::set<int>(g.begin(), g.end()).size() < 2 || std::find(y.begin(), y.end(), 1) == y.end()) return;
    const auto f = evaluate_fairness(p, y, g, 1);
    const auto of = oracle::fairness(y, p.labels, g, 1);
    gap(f.at("statistical_parity_difference"), of.spd);
    c.expect(f.has("equalized_odds_difference") == of.eod_defined, "EOD definedness differs");
    c.expect(f.has("equalized_opportunity_difference") == of.eopd_defined, "EOpD definedness differs");
    if (of.eod_defined) gap(f.at("equalized_odds_difference"), of.eod);
    if (of.eopd_defined) gap(f.at("equalized_opportunity_difference"), of.eopd);
  };
  const std::vector<double> grid{0.0, 0.2, 0.5, 0.6, 0.8, 1.0};
  for (std::size_t n = 1; n <= 4; ++n) {
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= grid.size() * 4;
    for (std::size_t code = 0; code < combos; ++code) {
      std::size_t rest = code;
      std::vector<double> p1(n);
      std::vector<int> y(n), g(n);
      for (std::size_t i = 0; i < n; ++i) {
        p1[i] = grid[rest % grid.size()];
        rest /= grid.size();
        y[i] = static_cast<int>(rest % 2);
        rest /= 2;
        g[i] = static_cast<int>(rest % 2);
        rest /= 2;
      }
      for (std::size_t bins : {1u, 2u, 5u, 15u}) compare(binary(p1), y, g, bins);
    }
  }
  Rng rng(21);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 12), k = 2 + uniform_index(rng, 3);
    compare(from_rows(n, k, rng), random_labels(n, k, rng), random_labels(n, 1 + uniform_index(rng, 3), rng),
            1 + uniform_index(rng, 15));
  }

  const double auc = evaluate(binary({0.9, 0.6, 0.7, 0.1}), std::vector<int>{1, 1, 0, 0}).at("roc_auc_score");
  c.expect(std::abs(auc - 0.75) <= kMetricTol, "pinned AUC fixture gave " + num(auc));
  const double spd = evaluate_fairness(binary({0.9, 0.8, 0.7, 0.1, 0.9, 0.2, 0.3, 0.1}),
                                       std::vector<int>{1, 0, 1, 0, 1, 0, 1, 0}, std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1})
                         .at("statistical_parity_difference");
  c.expect(std::abs(spd - 0.5) <= kMetricTol, "pinned SPD fixture gave " + num(spd));

  std::size_t ece_violations = 0;
  Rng prng(17);
  for (std::size_t t = 0; t < kRandomPredictionSets; ++t) {
    const std::size_t n = 1 + uniform_index(prng, 40), k = 2 + uniform_index(prng, 3);
    const auto r = evaluate_calibration(from_rows(n, k, prng), random_labels(n, k, prng), 1 + uniform_index(prng, 20));
    if (r.at("expected_calibration_error") > r.at("maximum_calibration_error")) ++ece_violations;
  }
  c.expect(ece_violations == 0, std::to_string(ece_violations) + " prediction sets with ECE > MCE");
  c.expect(worst <= kMetricTol, "max deviation " + num(worst));
  return {c.ok, c.ok ? std::to_string(fixtures) + " fixtures, max deviation " + num(worst) + " <= " + num(kMetricTol) +
                           "; AUC=" + num(auc) + ", SPD=" + num(spd) + "; ECE<=MCE on " +
                           std::to_string(kRandomPredictionSets) + " sets"
                     : c.failure};
}

// 6. Mean-rank protocol -----------------------------------------------------

SuiteResult rank_table(const std::vector<std::vector<double>>& metric, const std::string& rank_by) {
  SuiteResult r;
  r.rank_by = rank_by;
  for (std::size_t m = 0; m < metric.size(); ++m) {
    r.models.push_back("m" + std::to_string(m));
    r.strategies.push_back("inference");
  }
  for (std::size_t d = 0; d < metric[0].size(); ++d) r.datasets.push_back("d" + std::to_string(d));
  r.cells.assign(metric.size(), std::vector<SuiteCell>(metric[0].size()));
  for (std::size_t m = 0; m < metric.size(); ++m)
    for (std::size_t d = 0; d < metric[m].size(); ++d) r.cells[m][d].metric = metric[m][d];
  aggregate_suite(r);
  return r;
}

Outcome mean_rank_protocol() {
  Checker c;
  // Hand-enumerated: per-dataset ranks (1.5,1.5,3) (1.5,3,1.5) (2,1,3) (2.5,2.5,1).
  const std::vector<std::vector<double>> table{{0.7, 0.9, 0.5, 0.8}, {0.7, 0.6, 0.9, 0.8}, {0.6, 0.9, 0.4, 0.9}};
  const std::vector<double> hand{(1.5 + 1.5 + 2 + 2.5) / 4, (1.5 + 3 + 1 + 2.5) / 4, (3 + 1.5 + 3 + 1) / 4};
  const auto r = rank_table(table, "accuracy");
  for (std::size_t m = 0; m < 3; ++m)
    c.expect(r.mean_rank.at("m" + std::to_string(m)) == hand[m], "mean rank of m" + std::to_string(m));
  Rng rng(5);
  for (std::size_t t = 0; t < kRandomRankTables; ++t) {
    const std::size_t models = 1 + uniform_index(rng, 6), datasets = 1 + uniform_index(rng, 5);
    std::vector<std::vector<double>> m(models, std::vector<double>(datasets));
    for (auto& row : m)
      for (auto& v : row) v = static_cast<double>(uniform_index(rng, 3));
    const auto rt = rank_table(m, "accuracy");
    double total = 0;
    for (const auto& [name, v] : rt.mean_rank) total += v;
    c.expect(std::abs(total - models * (models + 1) / 2.0) < 1e-12, "sum-of-ranks identity failed");
  }
  return {c.ok, c.ok ? "3x4 table mean ranks {" + num(hand[0]) + ", " + num(hand[1]) + ", " + num(hand[2]) +
                           "} exact; n(n+1)/2 identity on " + std::to_string(kRandomRankTables) + " tables"
                     : c.failure};
}

// 7. Desk-scale learning signal --------------------------------------------

double accuracy_of(const Model& m, const FeatureMatrix& x, const std::vector<int>& y) {
  return oracle::accuracy(y, Prediction::from_proba(m.predict_proba(x)).labels);
}

Outcome learning_signal() {
  const auto t0 = Clock::now();
  const auto [train, test] = train_test_split(make_synthetic(100, 2, 2, 0.3, 3), SplitSpec{0.25, true, 3});
  const auto st = fit_preprocessor(train, icl_numeric_profile());
  const FeatureMatrix xtr = transform(st, train), xte = transform(st, test);
  const ModelSpec& spec = find_model_spec("MiniICL");
  MiniIcl zero(2, 2, *spec.arch, derive_seed(3, "model"));
  MiniIcl meta = zero;
  fit_zero_shot(zero, xtr, train.target());
  TuningConfig cfg = default_tuning_config(spec, TuningStrategy::Finetune, FinetuneMode::MetaLearning);
  cfg.seed = 3;
  train_meta(meta, xtr, train.target(), cfg);
  const double acc_meta = accuracy_of(meta, xte, test.target());
  const double acc_zero = accuracy_of(zero, xte, test.target());
  const double acc_knn = oracle::accuracy(test.target(), oracle::knn_predict(xtr, train.target(), xte, 5, 2));
  const double secs = seconds_since(t0);
  return {acc_meta >= kMetaAccuracy && acc_meta >= acc_zero && acc_knn >= kKnnAccuracy && secs < kLearningSeconds,
          "meta " + num(acc_meta, "%.4f") + " >= " + num(kMetaAccuracy) + " and >= zero-shot " + num(acc_zero, "%.4f") +
              "; 5-NN " + num(acc_knn, "%.4f") + " >= " + num(kKnnAccuracy) + "; lr " +
              num(cfg.optimizer.learning_rate) + ", " + std::to_string(cfg.epochs) + " epochs, " +
              num(secs, "%.1f") + " s < " + num(kLearningSeconds, "%.0f") + " s"};
}

// 8. Persistence ------------------------------------------------------------

PipelineConfig random_config(Rng& rng) {
  PipelineConfig cfg;
  cfg.seed = rng();
  switch (uniform_index(rng, 6)) {
    case 0: cfg.model_name = "KNN"; break;
    case 1:
      cfg.model_name = "LogisticRegression";
      cfg.strategy = uniform_index(rng, 2) ? TuningStrategy::Finetune : TuningStrategy::Inference;
      cfg.tuning_params = {{"epochs", "3"}};
      break;
    case 2: cfg.model_name = "MiniICL"; break;
    default:
      cfg.model_name = "MiniICL";
      cfg.strategy = uniform_index(rng, 2) ? TuningStrategy::Finetune : TuningStrategy::Peft;
      cfg.mode = uniform_index(rng, 2) ? FinetuneMode::Sft : FinetuneMode::MetaLearning;
      cfg.tuning_params = {{"epochs", "1"}, {"n_episodes", "2"}, {"support_size", "6"}, {"query_size", "4"},
                           {"batch_size", "8"}};
      break;
  }
  const ResampleMethod methods[] = {ResampleMethod::None, ResampleMethod::None, ResampleMethod::RandomOver,
                                    ResampleMethod::RandomUnder, ResampleMethod::Tomek};
  cfg.sampling.method = methods[uniform_index(rng, 5)];
  return cfg;
}

Outcome persistence() {
  Checker c;
  Rng rng(2024);
  std::size_t done = 0, redrawn = 0;
  for (std::size_t i = 0; done < kRoundTrips && c.ok; ++i) {
    const std::size_t k = 2 + uniform_index(rng, 3);
    const Dataset d = make_synthetic(6 + uniform_index(rng, 8), k, 1 + uniform_index(rng, 4),
                                     0.2 + uniform01(rng), rng());
    const auto [train, test] = train_test_split(d, SplitSpec{0.3, true, rng()});
    const PipelineConfig cfg = random_config(rng);
    PipelineState s;
    try {
      s = fit_pipeline(cfg, train, "target");
    } catch (const Error& e) {
      // Tiny random datasets can leave no trainable episode; draw again.
      if (e.category() != ErrorCategory::Training) throw;
      ++redrawn;
      continue;
    }
    const auto bytes = serialize(s);
    const PipelineState back = deserialize(bytes);
    c.expect(serialize(back) == bytes, "re-serialised bytes differ at trip " + std::to_string(i));
    c.expect(predict_proba(back, test).proba == predict_proba(s, test).proba,
             "predictions differ at trip " + std::to_string(i) + " (" + cfg.model_name + ")");
    ++done;
  }

  // Every alternative value of every byte of a small container, and every
  // byte flipped in a MiniICL container.
  std::size_t rejected = 0, attempts = 0;
  auto corrupt = [&](const std::vector<std::uint8_t>& bytes, bool all_values) {
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      for (int delta = 1; delta < 256; ++delta) {
        if (!all_values && delta != 0x80) continue;
        auto bad = bytes;
        bad[i] = static_cast<std::uint8_t>(bad[i] ^ delta);
        ++attempts;
        try {
          deserialize(bad);
        } catch (const Error& e) {
          const auto code = e.code();
          if (code == ErrorCode::BadMagic || code == ErrorCode::VersionUnsupported ||
              code == ErrorCode::TruncatedFile || code == ErrorCode::ChecksumMismatch)
            ++rejected;
        }
      }
    }
  };
  const auto [train, test] = train_test_split(make_synthetic(4, 2, 1, 0.5, 1), SplitSpec{0.25, true, 1});
  PipelineConfig small;
  small.model_name = "LogisticRegression";
  const auto small_bytes = serialize(fit_pipeline(small, train));
  corrupt(small_bytes, true);
  PipelineConfig icl;
  icl.model_name = "MiniICL";
  corrupt(serialize(fit_pipeline(icl, train)), false);
  c.expect(rejected == attempts, std::to_string(attempts - rejected) + " corruptions accepted");
  return {c.ok, c.ok ? std::to_string(done) + " round trips bit-identical (" + std::to_string(redrawn) +
                           " untrainable draws replaced); " + std::to_string(rejected) + "/" +
                           std::to_string(attempts) + " corruptions rejected (" + std::to_string(small_bytes.size()) +
                           "-byte container exhaustively)"
                     : c.failure};
}

// 9. Determinism ------------------------------------------------------------

Outcome determinism() {
  const std::filesystem::path dir = TABTUNE_TOY_SUITE_DIR;
  const SuiteManifest manifest = SuiteManifest::load(dir / "suite.ini");
  const ConfigFile configs = ConfigFile::load(dir / "configs.ini");
  const std::string first = run_suite(load_suite_configs(configs, 17), manifest, "accuracy", 1).results_csv();
  bool same = true;
  for (std::size_t threads : {1u, 2u, 4u, 0u})
    same = same && run_suite(load_suite_configs(configs, 17), manifest, "accuracy", threads).results_csv() == first;
  const std::size_t rows = static_cast<std::size_t>(std::count(first.begin(), first.end(), '\n')) - 1;
  return {same, same ? "results.csv byte-identical over 5 runs at 1, 1, 2, 4 and all threads (" +
                           std::to_string(rows) + " rows)"
                     : "results.csv differs between runs"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"gradient correctness", gradient_correctness},   {"LoRA identity and counting", lora_identity_and_counting},
      {"episodic mechanics", episodic_mechanics},       {"leakage invariants", leakage_invariants},
      {"metric oracle equivalence", metric_equivalence}, {"mean-rank protocol", mean_rank_protocol},
      {"desk-scale learning signal", learning_signal},  {"persistence", persistence},
      {"determinism", determinism},
  };
  int failed = 0, index = 0;
  for (const auto& c : criteria) {
    ++index;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", index, c.name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d/%d criteria passed\n", index - failed, index);
  return failed == 0 ? 0 : 1;
}
