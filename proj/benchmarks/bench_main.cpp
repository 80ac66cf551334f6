#include <benchmark/benchmark.h>

#include <random>

#include "tabtune/autodiff.hpp"
#include "tabtune/baselines.hpp"
#include "tabtune/metrics.hpp"
#include "tabtune/minicl.hpp"
#include "tabtune/rng.hpp"

using namespace tabtune;

namespace {

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

Prediction random_prediction(std::size_t n, std::size_t k, Rng& rng) {
  Tensor t = Tensor::matrix(n, k);
  for (double& v : t.values()) v = uniform01(rng) + 1e-3;
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0;
    for (double v : t.row(i)) total += v;
    for (double& v : t.row(i)) v /= total;
  }
  return Prediction::from_proba(std::move(t));
}

}  // namespace

// Query logits for one episode without gradients; range(0) support rows.
static void BM_MiniIclForward(benchmark::State& state) {
  const auto ns = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  MiniIcl model(8, 3, MiniIclArch{}, 1);
  const FeatureMatrix sx = random_rows(ns, 8, rng), qx = random_rows(32, 8, rng);
  const auto sy = random_labels(ns, 3, rng);
  for (auto _ : state) benchmark::DoNotOptimize(model.query_logits(sx, sy, qx, 3));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_MiniIclForward)->Arg(16)->Arg(48)->Arg(128)->Unit(benchmark::kMicrosecond);

// Forward plus backward of the episode loss at the default episode shape.
static void BM_MiniIclTrainStep(benchmark::State& state) {
  Rng rng(2);
  MiniIcl model(8, 3, MiniIclArch{}, 2);
  const FeatureMatrix sx = random_rows(48, 8, rng), qx = random_rows(32, 8, rng);
  const auto sy = random_labels(48, 3, rng), qy = random_labels(32, 3, rng);
  for (auto _ : state) {
    model.params().zero_grad();
    Tape tape;
    tape.backward(model.episode_loss(tape, sx, sy, qx, qy, 3, true, &rng));
  }
}
BENCHMARK(BM_MiniIclTrainStep)->Unit(benchmark::kMillisecond);

static void BM_Evaluate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Prediction p = random_prediction(n, 3, rng);
  const auto y = random_labels(n, 3, rng);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(p, y));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Evaluate)->Arg(1 << 10)->Arg(1 << 14);

static void BM_Calibration(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  const Prediction p = random_prediction(n, 3, rng);
  const auto y = random_labels(n, 3, rng);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_calibration(p, y, 15));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Calibration)->Arg(1 << 10)->Arg(1 << 14);

static void BM_Fairness(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  const Prediction p = random_prediction(n, 2, rng);
  const auto y = random_labels(n, 2, rng), g = random_labels(n, 4, rng);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_fairness(p, y, g));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Fairness)->Arg(1 << 10)->Arg(1 << 14);

// 5-NN prediction of 256 rows against range(0) stored context rows.
static void BM_KnnPredict(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(6);
  KnnClassifier model(8, 3);
  model.set_context({random_rows(n, 8, rng), random_labels(n, 3, rng)});
  const FeatureMatrix q = random_rows(256, 8, rng);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict_proba(q));
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_KnnPredict)->Arg(256)->Arg(2048)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
