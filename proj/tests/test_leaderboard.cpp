#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "tabtune/error.hpp"
#include "tabtune/leaderboard.hpp"
#include "tabtune/rng.hpp"

using namespace tabtune;

namespace {

SuiteResult table(const std::vector<std::vector<std::optional<double>>>& metric, const std::string& rank_by = "accuracy") {
  SuiteResult r;
  r.rank_by = rank_by;
  for (std::size_t m = 0; m < metric.size(); ++m) {
    r.models.push_back("m" + std::to_string(m));
    r.strategies.push_back("inference");
  }
  for (std::size_t d = 0; d < metric[0].size(); ++d) r.datasets.push_back("d" + std::to_string(d));
  r.cells.assign(metric.size(), std::vector<SuiteCell>(metric[0].size()));
  for (std::size_t m = 0; m < metric.size(); ++m)
    for (std::size_t d = 0; d < metric[m].size(); ++d) {
      r.cells[m][d].metric = metric[m][d];
      r.cells[m][d].accuracy = metric[m][d];
      r.cells[m][d].f1 = metric[m][d];
    }
  aggregate_suite(r);
  return r;
}

std::pair<Dataset, Dataset> toy(std::uint64_t seed) {
  return train_test_split(make_synthetic(20, 2, 3, 0.5, seed), SplitSpec{0.25, true, seed});
}

}  // namespace

TEST(Ranks, TiesShareMeanPosition) {
  const std::vector<double> v{0.9, 0.8, 0.9};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{1.5, 3.0, 1.5}));
  EXPECT_EQ(average_ranks(v, true), (std::vector<double>{2.5, 1.0, 2.5}));
  EXPECT_EQ(average_ranks(std::vector<double>{0.4}), std::vector<double>{1.0});
  EXPECT_TRUE(average_ranks(std::vector<double>{}).empty());
}

TEST(Ranks, MatchCountingOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 9);
    std::vector<double> v(n);
    for (auto& x : v) x = static_cast<double>(uniform_index(rng, 4)) / 4.0;
    for (bool asc : {false, true}) {
      const auto got = average_ranks(v, asc);
      const auto want = oracle::ranks_by_counting(v, asc);
      ASSERT_EQ(got, want);
      // Ranks always sum to n(n+1)/2.
      ASSERT_DOUBLE_EQ(std::accumulate(got.begin(), got.end(), 0.0), n * (n + 1) / 2.0);
    }
  }
}

TEST(Ranks, RankableKeys) {
  EXPECT_FALSE(rank_ascending("accuracy"));
  EXPECT_TRUE(rank_ascending("brier_score_loss"));
  try {
    rank_ascending("nonsense");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
}

TEST(Board, DuplicateNamesGetSuffix) {
  Leaderboard b;
  EXPECT_EQ(b.add_model("KNN", TuningStrategy::Inference), "KNN/inference");
  EXPECT_EQ(b.add_model("KNN", TuningStrategy::Inference), "KNN/inference#2");
  EXPECT_EQ(b.add_model("KNN", TuningStrategy::Inference), "KNN/inference#3");
  EXPECT_EQ(b.add_model("MiniICL", TuningStrategy::Peft, FinetuneMode::MetaLearning), "MiniICL/peft-meta-learning");
  EXPECT_EQ(b.size(), 4u);
}

TEST(Board, RejectsUnknownAndUnsupported) {
  Leaderboard b;
  try {
    b.add_model("Nope", TuningStrategy::Inference);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownModel);
  }
  try {
    b.add_model("KNN", TuningStrategy::Finetune);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedStrategy);
  }
  EXPECT_EQ(b.size(), 0u);
}

TEST(Board, SingleEntryRanksFirst) {
  const auto [train, test] = toy(1);
  Leaderboard b(3);
  b.add_model("KNN", TuningStrategy::Inference);
  const auto out = b.run(train, test);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].rank, 1.0);
}

TEST(Board, ResultsIndependentOfInsertionOrderAndThreads) {
  const auto [train, test] = toy(2);
  const std::map<std::string, std::string> short_run{{"epochs", "1"}, {"n_episodes", "4"}, {"support_size", "10"}, {"query_size", "6"}};
  Leaderboard a(7), b(7);
  a.add_model("KNN", TuningStrategy::Inference);
  a.add_model("LogisticRegression", TuningStrategy::Finetune);
  a.add_model("MiniICL", TuningStrategy::Inference);
  a.add_model("MiniICL", TuningStrategy::Finetune, FinetuneMode::MetaLearning, short_run);
  b.add_model("MiniICL", TuningStrategy::Finetune, FinetuneMode::MetaLearning, short_run);
  b.add_model("MiniICL", TuningStrategy::Inference);
  b.add_model("LogisticRegression", TuningStrategy::Finetune);
  b.add_model("KNN", TuningStrategy::Inference);
  const auto ra = a.run(train, test, "accuracy", 1);
  const auto rb = b.run(train, test, "accuracy", 3);
  ASSERT_EQ(ra.size(), rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ASSERT_EQ(ra[i].error, "");
    EXPECT_EQ(ra[i].display_name, rb[i].display_name);
    EXPECT_EQ(ra[i].rank, rb[i].rank);
    EXPECT_EQ(ra[i].report.values.at("accuracy"), rb[i].report.values.at("accuracy"));
    EXPECT_EQ(ra[i].report.values.at("brier_score_loss"), rb[i].report.values.at("brier_score_loss"));
  }
  for (std::size_t i = 1; i < ra.size(); ++i) EXPECT_LE(*ra[i - 1].rank, *ra[i].rank);
}

TEST(Suite, DominantModelRanksFirst) {
  const auto r = table({{0.9, 0.8, 0.95}, {0.7, 0.6, 0.5}});
  EXPECT_EQ(r.mean_rank.at("m0"), 1.0);
  EXPECT_EQ(r.mean_rank.at("m1"), 2.0);
  EXPECT_EQ(r.common_datasets.size(), 3u);
}

TEST(Suite, MeansUseCommonSubsetOnly) {
  // Model 1 failed on dataset 1, so only datasets 0 and 2 count.
  const auto r = table({{0.9, 0.1, 0.5}, {0.8, std::nullopt, 0.6}});
  EXPECT_EQ(r.common_datasets, (std::vector<std::string>{"d0", "d2"}));
  EXPECT_EQ(r.mean_rank.at("m0"), 1.5);
  EXPECT_EQ(r.mean_rank.at("m1"), 1.5);
  EXPECT_DOUBLE_EQ(r.mean_accuracy.at("m0"), 0.7);
  const auto none = table({{std::nullopt}, {0.3}});
  EXPECT_TRUE(none.common_datasets.empty());
  EXPECT_TRUE(none.mean_rank.empty());
}

TEST(Suite, ThreeByFourAgainstOracle) {
  const std::vector<std::vector<std::optional<double>>> m{
      {0.7, 0.9, 0.5, 0.8}, {0.7, 0.6, 0.9, 0.8}, {0.6, 0.9, 0.4, 0.9}};
  for (const std::string metric : {"accuracy", "brier_score_loss"}) {
    const bool asc = rank_ascending(metric);
    const auto r = table(m, metric);
    std::vector<double> want(3, 0.0);
    for (std::size_t d = 0; d < 4; ++d) {
      const auto ranks = oracle::ranks_by_counting({*m[0][d], *m[1][d], *m[2][d]}, asc);
      for (std::size_t k = 0; k < 3; ++k) want[k] += ranks[k] / 4.0;
    }
    for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(r.mean_rank.at("m" + std::to_string(k)), want[k]) << metric;
  }
}

TEST(Suite, MeanRanksSumToConstant) {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t models = 1 + uniform_index(rng, 6), datasets = 1 + uniform_index(rng, 5);
    std::vector<std::vector<std::optional<double>>> m(models, std::vector<std::optional<double>>(datasets));
    for (auto& row : m)
      for (auto& v : row) v = static_cast<double>(uniform_index(rng, 3));
    const auto r = table(m);
    double total = 0;
    for (const auto& [name, v] : r.mean_rank) total += v;
    ASSERT_NEAR(total, models * (models + 1) / 2.0, 1e-12);
  }
}

TEST(Suite, CsvIndependentOfThreadCount) {
  Leaderboard b(11);
  b.add_model("KNN", TuningStrategy::Inference);
  b.add_model("LogisticRegression", TuningStrategy::Finetune);
  b.add_model("MiniICL", TuningStrategy::Inference);
  std::vector<std::pair<std::string, std::pair<Dataset, Dataset>>> splits{{"a", toy(1)}, {"b", toy(2)}, {"c", toy(3)}};
  const SuiteResult one = run_suite(b, splits, "accuracy", 1);
  const SuiteResult many = run_suite(b, splits, "accuracy", 4);
  EXPECT_EQ(one.results_csv(), many.results_csv());
  EXPECT_EQ(one.summary_text("t"), many.summary_text("t"));
  EXPECT_EQ(one.models, (std::vector<std::string>{"KNN/inference", "LogisticRegression/sft", "MiniICL/inference"}));
  EXPECT_NE(one.results_csv().find("dataset,config,strategy,accuracy,accuracy,f1_score,rank,status"), std::string::npos);
}

TEST(Suite, ManifestParsing) {
  const auto m = SuiteManifest::parse(ConfigFile::parse("[dataset.iris]\npath = iris.csv\ntarget = species\n"
                                                        "test_fraction = 0.3\nstratified = false\n"),
                                      "/data");
  ASSERT_EQ(m.datasets.size(), 1u);
  EXPECT_EQ(m.datasets[0].path, std::filesystem::path("/data/iris.csv"));
  EXPECT_EQ(m.datasets[0].split.test_fraction, 0.3);
  EXPECT_FALSE(m.datasets[0].split.stratified);
  for (const char* bad : {"[dataset.x]\npath = a.csv\n", "[dataset.x]\npath = a\ntarget = t\ncolour = red\n",
                          "[dataset.x]\npath = a\ntarget = t\ntest_fraction = 1.5\n"}) {
    try {
      SuiteManifest::parse(ConfigFile::parse(bad));
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    }
  }
}

TEST(Suite, ConfigSections) {
  const auto board = load_suite_configs(ConfigFile::parse("[config.fast]\nmodel_name = KNN\n"
                                                          "[config.icl]\nmodel_name = MiniICL\n"),
                                        4);
  ASSERT_EQ(board.size(), 2u);
  EXPECT_EQ(board.entries()[0].first, "fast");
  EXPECT_EQ(board.entries()[1].second.model_name, "MiniICL");
  EXPECT_EQ(board.seed(), 4u);
}

TEST(Board, FailedEntriesAreUnrankedAndLast) {
  const auto [train, test] = toy(4);
  Leaderboard b(1);
  // 30 training rows cannot supply a 48 + 32 episode.
  const std::string failing = b.add_model("MiniICL", TuningStrategy::Finetune, FinetuneMode::MetaLearning);
  b.add_model("KNN", TuningStrategy::Inference);
  const auto out = b.run(train, test);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].rank, 1.0);
  EXPECT_EQ(out[1].display_name, failing);
  EXPECT_FALSE(out[1].rank.has_value());
  EXPECT_EQ(out[1].error.rfind("InfeasibleEpisode", 0), 0u) << out[1].error;
}
