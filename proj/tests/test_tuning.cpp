#include <gtest/gtest.h>

#include <map>

#include "oracles.hpp"
#include "tabtune/baselines.hpp"
#include "tabtune/dataset.hpp"
#include "tabtune/error.hpp"
#include "tabtune/minicl.hpp"
#include "tabtune/preprocess.hpp"
#include "tabtune/tuning.hpp"

using namespace tabtune;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected tabtune::Error";
  return ErrorCode::InvalidArgument;
}

// In-context stand-in that records the episode shapes it is trained on.
class SpyModel final : public Model {
 public:
  SpyModel(std::size_t n_features, std::size_t n_classes) : Model(n_features, n_classes) {
    params_.add("w", Tensor::scalar(1.0));
  }
  ModelKind kind() const override { return ModelKind::InContext; }
  const std::string& name() const override {
    static const std::string n = "Spy";
    return n;
  }
  std::unique_ptr<Model> clone() const override { return std::make_unique<SpyModel>(*this); }
  Var episode_loss(Tape& tape, const FeatureMatrix& sx, std::span<const int>, const FeatureMatrix& qx,
                   std::span<const int>, std::size_t, bool, Rng*) override {
    shapes.emplace_back(sx.rows, qx.rows);
    return ops::sum(tape.param(params_, "w"));
  }
  Tensor predict_proba(const FeatureMatrix& x) const override { return Tensor::matrix(x.rows, n_classes(), 0.5); }

  std::vector<std::pair<std::size_t, std::size_t>> shapes;
};

struct Split {
  FeatureMatrix x_train, x_test;
  std::vector<int> y_train, y_test;
};

Split encoded(const Dataset& d, double test_fraction, std::uint64_t seed) {
  const auto [train, test] = train_test_split(d, {test_fraction, true, seed});
  const auto st = fit_preprocessor(train, icl_numeric_profile());
  return {transform(st, train), transform(st, test), train.target(), test.target()};
}

double accuracy(const Model& m, const FeatureMatrix& x, const std::vector<int>& y) {
  const Tensor p = m.predict_proba(x);
  std::vector<int> pred;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < p.cols(); ++c)
      if (p.at(i, c) > p.at(i, best)) best = c;
    pred.push_back(static_cast<int>(best));
  }
  return oracle::accuracy(y, pred);
}

TuningConfig quick(TuningStrategy s, FinetuneMode m, std::uint64_t seed = 1) {
  TuningConfig cfg = default_tuning_config(find_model_spec("MiniICL"), s, m);
  cfg.epochs = 1;
  cfg.n_episodes = 20;
  cfg.support_size = 16;
  cfg.query_size = 8;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(Names, RoundTrip) {
  for (auto s : {TuningStrategy::Inference, TuningStrategy::Finetune, TuningStrategy::Peft})
    EXPECT_EQ(parse_tuning_strategy(tuning_strategy_name(s)), s);
  EXPECT_EQ(parse_finetune_mode("meta-learning"), FinetuneMode::MetaLearning);
  EXPECT_EQ(parse_finetune_mode("sft"), FinetuneMode::Sft);
  EXPECT_THROW(parse_tuning_strategy("bogus"), Error);
}

TEST(Params, ApplyAndDefaults) {
  TuningConfig cfg = default_tuning_config(find_model_spec("MiniICL"), TuningStrategy::Finetune,
                                           FinetuneMode::MetaLearning);
  EXPECT_DOUBLE_EQ(cfg.optimizer.learning_rate, 2e-4);
  EXPECT_EQ(cfg.support_size, 48u);
  EXPECT_EQ(cfg.query_size, 32u);
  EXPECT_EQ(cfg.n_episodes, 1000u);
  apply_tuning_param(cfg, "peft_config.r", "4");
  apply_tuning_param(cfg, "query_set_ratio", "0.3");
  apply_tuning_param(cfg, "clip_norm", "1.5");
  EXPECT_EQ(cfg.lora.rank, 4u);
  EXPECT_EQ(cfg.query_set_ratio, 0.3);
  EXPECT_EQ(cfg.optimizer.clip_norm, 1.5);
  EXPECT_EQ(code_of([&] { apply_tuning_param(cfg, "no_such_key", "1"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { apply_tuning_param(cfg, "epochs", "-1"); }), ErrorCode::InvalidConfig);
  for (const auto& key : tuning_param_keys()) EXPECT_FALSE(key.empty());
}

TEST(Episodes, ContiguousMap) {
  const std::vector<int> y{0, 1, 0, 1, 0, 1};
  Rng rng(0);
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto ep = sample_episode(y, 4, 2, rng);
    if (!ep) continue;
    EXPECT_EQ(ep->label_map, (std::map<int, int>{{0, 0}, {1, 1}}));
    return;
  }
  FAIL() << "no episode covered both classes";
}

TEST(Episodes, AscendingRemapOfSparseClasses) {
  const std::vector<int> y{9, 5, 9, 5, 9, 5, 9, 5};
  Rng rng(1);
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto ep = sample_episode(y, 4, 2, rng);
    if (!ep) continue;
    EXPECT_EQ(ep->label_map, (std::map<int, int>{{5, 0}, {9, 1}}));
    const auto mapped = ep->remap(y, ep->support);
    for (std::size_t i = 0; i < mapped.size(); ++i) EXPECT_EQ(mapped[i], y[ep->support[i]] == 5 ? 0 : 1);
    return;
  }
  FAIL();
}

TEST(Episodes, Infeasible) {
  Rng rng(0);
  const std::vector<int> y{0, 1, 0};
  EXPECT_EQ(code_of([&] { sample_episode(y, 2, 2, rng); }), ErrorCode::InfeasibleEpisode);
}

TEST(Episodes, InvariantsAndSkipRateMatchHypergeometricOracle) {
  struct Case {
    std::vector<std::size_t> counts;
    std::size_t s, q;
  };
  for (const Case& c : {Case{{10, 10, 10}, 6, 4}, Case{{12, 6, 2}, 5, 3}, Case{{3, 3, 3}, 3, 3}}) {
    std::vector<int> y;
    for (std::size_t k = 0; k < c.counts.size(); ++k) y.insert(y.end(), c.counts[k], static_cast<int>(k));
    Rng rng(derive_seed(42, "episodes"));
    std::size_t skipped = 0;
    const std::size_t draws = 10000;
    for (std::size_t i = 0; i < draws; ++i) {
      auto ep = sample_episode(y, c.s, c.q, rng);
      if (!ep) {
        ++skipped;
        continue;
      }
      ASSERT_NO_THROW(validate_episode(*ep, y));
      ASSERT_EQ(ep->support.size(), c.s);
      ASSERT_EQ(ep->query.size(), c.q);
    }
    const double expected = oracle::skip_probability(c.counts, c.s, c.q);
    EXPECT_NEAR(static_cast<double>(skipped) / draws, expected, 0.03) << "oracle " << expected;
  }
}

TEST(Episodes, ValidatorRejectsBrokenEpisodes) {
  const std::vector<int> y{0, 1, 2, 0, 1, 2};
  Episode overlap{{0, 1, 2}, {2, 3}, {{0, 0}, {1, 1}, {2, 2}}};
  EXPECT_THROW(validate_episode(overlap, y), Error);
  Episode gap{{0, 2}, {3}, {{0, 0}, {2, 2}}};
  EXPECT_THROW(validate_episode(gap, y), Error);
  Episode unseen{{0, 1}, {2}, {{0, 0}, {1, 1}}};
  EXPECT_THROW(validate_episode(unseen, y), Error);
}

TEST(Sft, PseudoEpisodeSplits) {
  FeatureMatrix x(32, 2, 0.0);
  std::vector<int> y(32);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);
  TuningConfig cfg;
  cfg.strategy = TuningStrategy::Finetune;
  cfg.epochs = 1;

  SpyModel even(2, 2);
  cfg.batch_size = 16;
  train_sft(even, x, y, cfg);
  for (const auto& [s, q] : even.shapes) {
    EXPECT_EQ(s, 8u);
    EXPECT_EQ(q, 8u);
  }

  SpyModel odd(2, 2);
  cfg.batch_size = 15;
  train_sft(odd, x, y, cfg);
  EXPECT_EQ(odd.shapes.front(), (std::pair<std::size_t, std::size_t>{8, 7}));

  SpyModel ratio(2, 2);
  cfg.batch_size = 16;
  cfg.query_set_ratio = 0.3;
  train_sft(ratio, x, y, cfg);
  EXPECT_EQ(ratio.shapes.front(), (std::pair<std::size_t, std::size_t>{12, 4}));
}

TEST(Sft, LossDecreasesOnFixedBatch) {
  const Split s = encoded(make_synthetic(30, 3, 4, 0.6, 3), 0.25, 3);
  MiniIcl model(4, 3, MiniIclArch{}, 3);
  const std::vector<std::size_t> support{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  const std::vector<std::size_t> query{12, 13, 14, 15, 16, 17, 18, 19};
  std::vector<int> sy, qy;
  for (auto r : support) sy.push_back(s.y_train[r]);
  for (auto r : query) qy.push_back(s.y_train[r]);
  ASSERT_EQ(std::set<int>(sy.begin(), sy.end()).size(), 3u);
  const FeatureMatrix sx = s.x_train.select_rows(support), qx = s.x_train.select_rows(query);
  OptimizerSpec spec;
  spec.learning_rate = 1e-3;
  Optimizer opt(spec, 1);
  std::vector<double> losses;
  for (int step = 0; step < 50; ++step) {
    Tape t;
    Var loss = model.episode_loss(t, sx, sy, qx, qy, 3, false, nullptr);
    losses.push_back(loss.value()[0]);
    t.backward(loss);
    opt.step(model.params());
  }
  std::size_t down = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) down += losses[i] < losses[i - 1];
  EXPECT_GE(static_cast<double>(down) / static_cast<double>(losses.size() - 1), 0.8);
  EXPECT_LT(losses.back(), losses.front());
}

TEST(Sft, ZeroEpochsIsNoOp) {
  const Split s = encoded(make_synthetic(20, 2, 2, 0.5, 1), 0.25, 1);
  MiniIcl model(2, 2, MiniIclArch{}, 0);
  const std::uint64_t before = fingerprint(model.params());
  TuningConfig cfg = quick(TuningStrategy::Finetune, FinetuneMode::Sft);
  cfg.epochs = 0;
  const FitMetadata m = train_sft(model, s.x_train, s.y_train, cfg);
  EXPECT_EQ(fingerprint(model.params()), before);
  EXPECT_EQ(m.optimizer_steps, 0u);
}

TEST(Meta, ZeroEpisodesIsNoOp) {
  const Split s = encoded(make_synthetic(20, 2, 2, 0.5, 1), 0.25, 1);
  MiniIcl model(2, 2, MiniIclArch{}, 0);
  const std::uint64_t before = fingerprint(model.params());
  TuningConfig cfg = quick(TuningStrategy::Finetune, FinetuneMode::MetaLearning);
  cfg.n_episodes = 0;
  train_meta(model, s.x_train, s.y_train, cfg);
  EXPECT_EQ(fingerprint(model.params()), before);
}

TEST(Meta, AllBatchesSkipped) {
  FeatureMatrix x(10, 2, 0.0);
  std::vector<int> y{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  MiniIcl model(2, 10, MiniIclArch{}, 0);
  TuningConfig cfg = quick(TuningStrategy::Finetune, FinetuneMode::MetaLearning);
  cfg.support_size = 2;
  cfg.query_size = 2;
  cfg.n_episodes = 3;
  EXPECT_EQ(code_of([&] { train_meta(model, x, y, cfg); }), ErrorCode::AllBatchesSkipped);
}

TEST(Meta, InfeasibleEpisodeSize) {
  const Split s = encoded(make_synthetic(10, 2, 2, 0.5, 1), 0.25, 1);
  MiniIcl model(2, 2, MiniIclArch{}, 0);
  TuningConfig cfg = quick(TuningStrategy::Finetune, FinetuneMode::MetaLearning);
  cfg.support_size = 48;
  EXPECT_EQ(code_of([&] { train_meta(model, s.x_train, s.y_train, cfg); }), ErrorCode::InfeasibleEpisode);
}

TEST(ZeroShot, LeavesParametersUntouched) {
  const Split s = encoded(make_synthetic(20, 2, 2, 0.5, 1), 0.25, 1);
  MiniIcl model(2, 2, MiniIclArch{}, 0);
  const std::uint64_t before = fingerprint(model.params());
  const FitMetadata m = fit_zero_shot(model, s.x_train, s.y_train);
  EXPECT_EQ(fingerprint(model.params()), before);
  EXPECT_EQ(m.optimizer_steps, 0u);
  const ContextState first = model.context();
  fit_zero_shot(model, s.x_train, s.y_train);
  EXPECT_EQ(model.context(), first);
  LogisticRegression logistic(2, 2, 0);
  EXPECT_EQ(code_of([&] { fit_zero_shot(logistic, s.x_train, s.y_train); }), ErrorCode::UnsupportedStrategy);
}

TEST(ZeroShot, UntrainedModelBeatsChanceOnSupportRows) {
  // Pinned from a single measurement on the seed-3 fixture (1.0); the
  // bound keeps the agreed ±0.1 tolerance.
  const Split s = encoded(make_synthetic(100, 2, 2, 0.3, 3), 0.25, 3);
  MiniIcl model(2, 2, MiniIclArch{}, derive_seed(3, "model"));
  fit_zero_shot(model, s.x_train, s.y_train);
  const double acc = accuracy(model, s.x_train, s.y_train);
  EXPECT_GT(acc, 0.5);
  EXPECT_NEAR(acc, 1.0, 0.1);
}

TEST(Determinism, TrainingIsBitReproducible) {
  const Split s = encoded(make_synthetic(30, 3, 3, 0.5, 2), 0.25, 2);
  for (auto [strategy, mode] : {std::pair{TuningStrategy::Finetune, FinetuneMode::Sft},
                                std::pair{TuningStrategy::Finetune, FinetuneMode::MetaLearning},
                                std::pair{TuningStrategy::Peft, FinetuneMode::MetaLearning}}) {
    auto run = [&, strategy = strategy, mode = mode] {
      MiniIcl model(3, 3, MiniIclArch{}, 7);
      tune(model, find_model_spec("MiniICL"), s.x_train, s.y_train, quick(strategy, mode, 11));
      return fingerprint(model.params());
    };
    EXPECT_EQ(run(), run());
  }
}

TEST(Dispatch, FollowsCapabilityMatrix) {
  const Split s = encoded(make_synthetic(40, 2, 2, 0.5, 4), 0.25, 4);
  struct Request {
    StrategyKey key;
    TuningStrategy strategy;
    FinetuneMode mode;
  };
  const Request requests[] = {{StrategyKey::Inference, TuningStrategy::Inference, FinetuneMode::Sft},
                              {StrategyKey::Sft, TuningStrategy::Finetune, FinetuneMode::Sft},
                              {StrategyKey::Meta, TuningStrategy::Finetune, FinetuneMode::MetaLearning},
                              {StrategyKey::PeftSft, TuningStrategy::Peft, FinetuneMode::Sft},
                              {StrategyKey::PeftMeta, TuningStrategy::Peft, FinetuneMode::MetaLearning}};
  for (const auto& spec : model_registry())
    for (const auto& r : requests) {
      auto model = create_model(spec.name, 2, 2, 0);
      TuningConfig cfg = default_tuning_config(spec, r.strategy, r.mode);
      cfg.epochs = 1;
      cfg.n_episodes = 2;
      cfg.support_size = 16;
      cfg.query_size = 8;
      ASSERT_EQ(strategy_key(cfg), r.key);
      if (spec.capabilities.of(r.key) == Support::None) {
        EXPECT_EQ(code_of([&] { tune(*model, spec, s.x_train, s.y_train, cfg); }), ErrorCode::UnsupportedStrategy)
            << spec.name << " " << strategy_key_name(r.key);
      } else {
        EXPECT_NO_THROW(tune(*model, spec, s.x_train, s.y_train, cfg)) << spec.name << " " << strategy_key_name(r.key);
      }
    }
}

TEST(Peft, FrozenBaseWeightsUnchanged) {
  const Split s = encoded(make_synthetic(40, 2, 2, 0.5, 5), 0.25, 5);
  MiniIcl model(2, 2, MiniIclArch{}, 5);
  const ParamStore before = model.params();
  const FitMetadata m = train_peft(model, s.x_train, s.y_train, quick(TuningStrategy::Peft, FinetuneMode::MetaLearning));
  ASSERT_TRUE(m.peft);
  EXPECT_EQ(m.peft->outcome, PeftOutcome::Attached);
  const auto heads = model.head_params();
  bool adapters_moved = false;
  for (const auto& [name, p] : before) {
    const bool head = std::find(heads.begin(), heads.end(), name) != heads.end();
    if (!head) EXPECT_EQ(model.params().at(name).value, p.value) << name;
  }
  for (const auto& [name, p] : model.params())
    if (name.ends_with(".lora_up")) adapters_moved = adapters_moved || p.value != Tensor(p.value.shape());
  EXPECT_TRUE(adapters_moved);
  EXPECT_EQ(m.peft->trainable_params, lora_trainable_closed_form(model, model.lora().value()));
}

TEST(Peft, LogisticFallbackReproducesPlainSft) {
  const Split s = encoded(make_synthetic(40, 3, 3, 0.5, 6), 0.25, 6);
  const ModelSpec& spec = find_model_spec("LogisticRegression");
  TuningConfig sft = default_tuning_config(spec, TuningStrategy::Finetune, FinetuneMode::Sft);
  sft.seed = 99;
  TuningConfig peft = sft;
  peft.strategy = TuningStrategy::Peft;
  auto a = create_model(spec.name, 3, 3, 8), b = create_model(spec.name, 3, 3, 8);
  tune(*a, spec, s.x_train, s.y_train, sft);
  const FitMetadata m = tune(*b, spec, s.x_train, s.y_train, peft);
  ASSERT_TRUE(m.peft);
  EXPECT_EQ(m.peft->outcome, PeftOutcome::Fallback);
  EXPECT_EQ(fingerprint(a->params()), fingerprint(b->params()));
  EXPECT_EQ(a->predict_proba(s.x_test), b->predict_proba(s.x_test));
}

// Trainable share of MiniICL under the default adapters. The closed-form
// count for this architecture is 4,426 of 21,706 parameters (about 20.4%),
// so the target below cannot be met without changing the architecture or
// the adapter rank; the test reports the gap rather than hiding it.
TEST(Peft, TrainableFractionBelowFifteenPercent) {
  MiniIcl model(2, 2, MiniIclArch{}, 0);
  const PeftReport r = attach_lora(model, LoraConfig{}, 0);
  EXPECT_EQ(r.trainable_params, 4426u);
  EXPECT_EQ(r.total_params, 21706u);
  EXPECT_LT(r.trainable_fraction(), 0.15);
}

TEST(Meta, BeatsZeroShotOnSeedThreeFixture) {
  const Split s = encoded(make_synthetic(100, 2, 2, 0.3, 3), 0.25, 3);
  const ModelSpec& spec = find_model_spec("MiniICL");
  MiniIcl zero(2, 2, *spec.arch, derive_seed(3, "model"));
  MiniIcl meta = zero;
  fit_zero_shot(zero, s.x_train, s.y_train);
  TuningConfig cfg = default_tuning_config(spec, TuningStrategy::Finetune, FinetuneMode::MetaLearning);
  cfg.seed = 3;
  const FitMetadata m = train_meta(meta, s.x_train, s.y_train, cfg);
  EXPECT_EQ(m.executed, cfg.epochs * cfg.n_episodes);
  const double acc_meta = accuracy(meta, s.x_test, s.y_test), acc_zero = accuracy(zero, s.x_test, s.y_test);
  EXPECT_GE(acc_meta, 0.9);
  EXPECT_GE(acc_meta, acc_zero);
}
