#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_util.h"
#include "xdfm/error.h"
#include "xdfm/metrics.h"
#include "xdfm/optim.h"

using namespace xdfm;

namespace {

Splits synthetic_splits(const SyntheticSpec& spec) {
  return split(synthesize(spec).dataset, {}, spec.seed);
}

// Each (f0, f1) combination has a fixed label, so a model that can fit
// per-feature weights memorizes the set.
Dataset separable_toy() {
  Dataset d{Schema(test_util::uni_schema(2)), {}};
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 2; ++b) {
      const FeatureId fa = d.schema.intern(0, "a" + std::to_string(a));
      const FeatureId fb = d.schema.intern(1, "b" + std::to_string(b));
      d.instances.push_back({a % 2, {{fa}, {fb}}});
    }
  }
  return d;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
  Vec p{1, -2, 3};
  AdamState st(3, {});
  adam_step(p, Vec{0, 0, 0}, st);
  EXPECT_EQ(p, (Vec{1, -2, 3}));
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  Vec p{1, -2, 3};
  const Vec g{0.5, -4, 1e-3};
  AdamState st(3, {0.01, 0.9, 0.999, 1e-8});
  adam_step(p, g, st);
  const Vec start{1, -2, 3};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(p[i], start[i] - 0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
  }
}

TEST(Adam, EqualGradientsGiveEqualUpdates) {
  Vec p{0.5, 0.5};
  AdamState st(2, {});
  for (int i = 0; i < 5; ++i) adam_step(p, Vec{0.3, 0.3}, st);
  EXPECT_EQ(p[0], p[1]);
}

TEST(Adam, SizeMismatchThrows) {
  Vec p(3);
  AdamState st(2, {});
  EXPECT_THROW(adam_step(p, Vec(3), st), DimensionError);
}

TEST(Adam, MinimizesQuadratic) {
  Vec p{5.0};
  AdamState st(1, {0.1, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 2000; ++i) adam_step(p, Vec{2 * (p[0] - 1.5)}, st);
  EXPECT_NEAR(p[0], 1.5, 1e-3);
}

TEST(Train, ZeroEpochsReturnsInitialParams) {
  const Splits s = synthetic_splits(test_util::interaction_spec({{0, 1}}, 2, 200, 1));
  const ModelSpec spec = make_preset("FM");
  TrainConfig cfg;
  cfg.max_epochs = 0;
  const TrainResult r = train(spec, s.train, s.valid, cfg);
  EXPECT_TRUE(r.history.epochs.empty());
  EXPECT_EQ(r.history.best_epoch, 0u);
  const ModelParams init = init_params(spec, 4, s.train.schema.vocab_size(), derive_seed(cfg.seed, 0));
  EXPECT_EQ(flatten(r.params, spec), flatten(init, spec));
}

TEST(Train, DeterministicUnderSeed) {
  const Splits s = synthetic_splits(test_util::interaction_spec({{0, 1}}, 2, 600, 2));
  ModelSpec spec = make_preset("xDeepFM");
  spec.dnn.widths = {8};
  spec.cin.widths = {4, 4};
  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.max_epochs = 3;
  cfg.lr = 0.01;
  const TrainResult a = train(spec, s.train, s.valid, cfg);
  const TrainResult b = train(spec, s.train, s.valid, cfg);
  EXPECT_EQ(flatten(a.params, spec), flatten(b.params, spec));
  ASSERT_EQ(a.history.epochs.size(), b.history.epochs.size());
  for (std::size_t e = 0; e < a.history.epochs.size(); ++e) {
    EXPECT_EQ(a.history.epochs[e].train_loss, b.history.epochs[e].train_loss);
    EXPECT_EQ(a.history.epochs[e].valid_auc, b.history.epochs[e].valid_auc);
  }
  cfg.seed = 2;
  EXPECT_NE(flatten(train(spec, s.train, s.valid, cfg).params, spec), flatten(a.params, spec));
}

TEST(Train, FmBeatsLrOnPairwiseData) {
  const Splits s = synthetic_splits(test_util::interaction_spec({{0, 1}, {2, 3}}, 1.5, 50000, 3));
  TrainConfig cfg;
  cfg.batch_size = 256;
  cfg.max_epochs = 10;
  cfg.lr = 0.005;
  const auto valid_auc = [&](const std::string& preset) {
    const ModelSpec spec = make_preset(preset);
    return evaluate(train(spec, s.train, s.valid, cfg).params, spec, s.valid).auc;
  };
  const double lr = valid_auc("LR");
  const double fm = valid_auc("FM");
  EXPECT_GE(fm - lr, 0.05) << "LR " << lr << " FM " << fm;
}

TEST(Train, MemorizesSeparableToy) {
  const Dataset d = separable_toy();
  const ModelSpec spec = make_preset("LR");
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.batch_size = 8;
  cfg.max_epochs = 200;
  cfg.lambda = 0.0;
  cfg.patience = 0;
  const TrainResult r = train(spec, d, Dataset{}, cfg);
  EXPECT_LT(r.history.epochs.back().train_loss, 0.05);
  EXPECT_EQ(r.history.epochs.size(), 200u);
  const EvalReport rep = evaluate(r.params, spec, d);
  EXPECT_EQ(rep.auc, 1.0);
}

TEST(Train, EarlyStoppingKeepsBestEpoch) {
  const Splits s = synthetic_splits(test_util::interaction_spec({{0, 1}}, 0.01, 400, 5));
  ModelSpec spec = make_preset("FM");
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_epochs = 60;
  cfg.lr = 0.05;
  cfg.patience = 2;
  const TrainResult r = train(spec, s.train, s.valid, cfg);
  const auto& ep = r.history.epochs;
  ASSERT_FALSE(ep.empty());
  ASSERT_GE(r.history.best_epoch, 1u);
  double best = -1;
  for (const auto& e : ep) best = std::max(best, e.valid_auc);
  EXPECT_EQ(ep[r.history.best_epoch - 1].valid_auc, best);
  if (ep.size() < 60) EXPECT_EQ(ep.size(), r.history.best_epoch + 2);
  EXPECT_EQ(evaluate(r.params, spec, s.valid).auc, best);
}

TEST(Train, NoValidationKeepsLastEpoch) {
  const Splits s = synthetic_splits(test_util::interaction_spec({{0, 1}}, 2, 300, 6));
  const ModelSpec spec = make_preset("FM");
  TrainConfig cfg;
  cfg.max_epochs = 4;
  cfg.batch_size = 32;
  const TrainResult r = train(spec, s.train, Dataset{}, cfg);
  EXPECT_EQ(r.history.best_epoch, 4u);
  EXPECT_TRUE(std::isnan(r.history.epochs[0].valid_auc));
}

TEST(Train, DivergenceNamesEpochAndBatch) {
  const Splits s = synthetic_splits(test_util::interaction_spec({{0, 1}}, 2, 300, 6));
  ModelSpec spec = make_preset("DNN");
  spec.dnn.widths = {4};
  spec.dnn.activation = Activation::kIdentity;
  TrainConfig cfg;
  cfg.lr = 1e200;
  cfg.batch_size = 8;
  try {
    train(spec, s.train, s.valid, cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos);
  }
}

TEST(Train, ConfigErrors) {
  const Splits s = synthetic_splits(test_util::interaction_spec({{0, 1}}, 2, 100, 6));
  const ModelSpec spec = make_preset("LR");
  TrainConfig cfg;
  EXPECT_THROW(train(spec, Dataset{}, s.valid, cfg), TrainingError);
  cfg.lr = 0;
  EXPECT_THROW(train(spec, s.train, s.valid, cfg), ConfigError);
  cfg.lr = 0.01;
  cfg.batch_size = 0;
  EXPECT_THROW(train(spec, s.train, s.valid, cfg), ConfigError);
}

TEST(Train, BenchRecordsPartTimes) {
  const Splits s = synthetic_splits(test_util::interaction_spec({{0, 1}}, 2, 200, 7));
  ModelSpec spec = make_preset("xDeepFM");
  spec.dnn.widths = {4};
  spec.cin.widths = {2};
  TrainConfig cfg;
  cfg.max_epochs = 1;
  cfg.bench = true;
  const TrainResult r = train(spec, s.train, s.valid, cfg);
  ASSERT_TRUE(r.history.epochs[0].cin_seconds.has_value());
  EXPECT_GE(*r.history.epochs[0].cin_seconds, 0.0);
  std::ostringstream out;
  write_history_jsonl(out, r.history);
  EXPECT_NE(out.str().find("cin_seconds"), std::string::npos);
}
