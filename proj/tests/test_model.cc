#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "test_util.h"
#include "xdfm/error.h"
#include "xdfm/model.h"
#include "xdfm/oracle.h"

using namespace xdfm;

namespace {

// Two univalent fields plus a multivalent one, three tokens each.
Schema small_schema() {
  SchemaConfig c = test_util::uni_schema(2);
  c.fields.push_back({"tags", Arity::kMultivalent});
  Schema s(c);
  for (std::size_t f = 0; f < 3; ++f)
    for (const char* t : {"a", "b", "c"}) s.intern(f, t);
  return s;
}

std::vector<Instance> random_instances(const Schema& s, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Instance> out;
  for (std::size_t i = 0; i < n; ++i) {
    Instance inst;
    inst.label = static_cast<int>(rng.uniform_int(2));
    inst.fields.resize(s.num_fields());
    for (std::size_t f = 0; f < s.num_fields(); ++f) {
      const auto ids = s.field_features(f);
      const std::size_t k = s.field(f).arity == Arity::kUnivalent ? 1 : rng.uniform_int(3);
      for (std::size_t t = 0; t < k; ++t) inst.fields[f].push_back(ids[rng.uniform_int(ids.size())]);
    }
    out.push_back(std::move(inst));
  }
  return out;
}

ModelSpec small(const std::string& preset) {
  ModelSpec spec = make_preset(preset);
  spec.embedding_dim = 3;
  spec.dnn.widths = {5, 4};
  spec.cin.widths = {3, 2};
  spec.cross_depth = 2;
  spec.init_std = 0.3;
  return spec;
}

std::string to_bytes(const ModelParams& p, const ModelSpec& spec, const Schema* s) {
  std::ostringstream out;
  write_checkpoint(out, p, spec, s, 5);
  return out.str();
}

}  // namespace

TEST(Presets, PartsAndNames) {
  EXPECT_EQ(make_preset("LR").parts, static_cast<unsigned>(Part::kLinear));
  const ModelSpec x = make_preset("xdeepfm");
  EXPECT_TRUE(x.has(Part::kLinear) && x.has(Part::kCin) && x.has(Part::kDnn));
  EXPECT_FALSE(x.has(Part::kFm));
  EXPECT_TRUE(make_preset("DCN").has(Part::kCross));
  EXPECT_EQ(x.embedding_dim, 10u);
  EXPECT_EQ(x.cin.widths, (std::vector<std::size_t>{100, 100, 100}));
  EXPECT_EQ(x.dnn.widths, (std::vector<std::size_t>{400, 400}));
  EXPECT_THROW(make_preset("wide&deep"), ConfigError);
  for (const auto& name : preset_names()) {
    const ModelSpec s = make_preset(name);
    EXPECT_EQ(parse_parts(parts_to_string(s.parts)), s.parts);
    EXPECT_NO_THROW(validate_spec(s));
  }
}

TEST(Presets, ValidateRejectsBrokenSpecs) {
  ModelSpec s = make_preset("xDeepFM");
  s.cin.widths.clear();
  EXPECT_THROW(validate_spec(s), ConfigError);
  s = make_preset("DNN");
  s.embedding_dim = 0;
  EXPECT_THROW(validate_spec(s), ConfigError);
  s.parts = 0;
  EXPECT_THROW(validate_spec(s), ConfigError);
  EXPECT_THROW(parse_parts("linear,attention"), ConfigError);
}

TEST(Forward, AllZeroParamsGiveHalf) {
  const Schema s = small_schema();
  for (const auto& name : preset_names()) {
    const ModelSpec spec = small(name);
    ModelParams p = make_params(spec, 3, s.vocab_size());
    p.fm_weight = 0.0;
    for (const auto& inst : random_instances(s, 5, 1)) EXPECT_EQ(forward(inst, p, spec), 0.5) << name;
  }
}

TEST(Forward, LogisticRegressionClosedForm) {
  const ModelSpec spec = make_preset("LR");
  ModelParams p = make_params(spec, 2, 6);
  p.linear.weights[4] = std::log(3.0);
  EXPECT_NEAR(forward(Instance{1, {{4}, {}}}, p, spec), 0.75, 1e-15);
}

TEST(Forward, SingleMapCinGeneralizesDeepFm) {
  // An upper-triangular ones filter turns the CIN map into the FM pairwise
  // sum, and its output weight plays the learned FM weight.
  const Schema s = small_schema();
  ModelSpec deepfm = small("DeepFM");
  ModelSpec xdfm = small("xDeepFM");
  xdfm.cin.widths = {1};
  ModelParams a = init_params(deepfm, 3, s.vocab_size(), 3);
  ModelParams b = init_params(xdfm, 3, s.vocab_size(), 99);
  b.embedding = a.embedding;
  b.linear = a.linear;
  b.dnn = a.dnn;
  b.dnn_out = a.dnn_out;
  b.bias = a.bias = 0.2;
  a.fm_weight = 0.37;
  Mat upper(3, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j) upper(i, j) = 1.0;
  b.cin.set_filter(0, 0, upper);
  b.cin.output = {0.37};
  for (const auto& inst : random_instances(s, 20, 4)) {
    EXPECT_NEAR(logit(inst, a, deepfm), logit(inst, b, xdfm), 1e-12);
  }
}

TEST(Forward, WrongFieldCountThrows) {
  const ModelSpec spec = small("FM");
  const ModelParams p = make_params(spec, 3, 12);
  EXPECT_THROW(forward(Instance{1, {{3}}}, p, spec), DimensionError);
}

TEST(Logloss, Examples) {
  EXPECT_NEAR(logloss(Vec{0.5}, std::vector<int>{1}), std::log(2.0), 1e-15);
  EXPECT_NEAR(logloss(Vec{1.0}, std::vector<int>{1}), 1e-12, 1e-15);
  EXPECT_NEAR(logloss(Vec{0.9, 0.2}, std::vector<int>{1, 0}), 0.164252033486018, 1e-12);
  EXPECT_TRUE(std::isfinite(logloss(Vec{0.0}, std::vector<int>{1})));
  EXPECT_THROW(logloss(Vec{}, std::vector<int>{}), ArgumentError);
  EXPECT_THROW(logloss(Vec{0.5}, std::vector<int>{1, 0}), ArgumentError);
}

TEST(Objective, SquaredL2OverRegularizedGroups) {
  const ModelSpec spec = make_preset("LR");
  ModelParams p = make_params(spec, 2, 4);
  p.linear.weights[3] = 2.0;
  EXPECT_EQ(objective(0.25, p, spec, 0.0), 0.25);
  EXPECT_NEAR(objective(0.0, p, spec, 1e-4), 4e-4, 1e-18);
  p.bias = 10.0;
  EXPECT_NEAR(l2_penalty(p, spec), 4.0, 1e-15);
  EXPECT_THROW(objective(0.0, p, spec, -1.0), ArgumentError);
}

TEST(Objective, EmbeddingsAndBiasesUnregularized) {
  const ModelSpec spec = small("xDeepFM");
  ModelParams p = make_params(spec, 3, 12);
  p.embedding.table.fill(5.0);
  for (auto& l : p.dnn.layers) std::fill(l.bias.begin(), l.bias.end(), 3.0);
  EXPECT_EQ(l2_penalty(p, spec), 0.0);
  for (const auto& g : param_groups(p, spec)) {
    const bool bias = g.name == "bias" || g.name.ends_with(".bias");
    if (bias || g.name == "embedding") EXPECT_FALSE(g.regularized) << g.name;
    else EXPECT_TRUE(g.regularized) << g.name;
  }
}

TEST(Params, GroupOrderAndFlattenRoundTrip) {
  const ModelSpec spec = small("xDeepFM");
  ModelParams p = init_params(spec, 3, 12, 8);
  std::vector<std::string> names;
  for (const auto& g : param_groups(p, spec)) names.push_back(g.name);
  EXPECT_EQ(names.front(), "bias");
  EXPECT_EQ(names[1], "linear");
  EXPECT_EQ(names[2], "embedding");
  EXPECT_EQ(names.back(), "cin.out");
  const Vec flat = flatten(p, spec);
  EXPECT_EQ(flat.size(), num_parameters(p, spec));
  ModelParams q = make_params(spec, 3, 12);
  unflatten(flat, q, spec);
  EXPECT_EQ(flatten(q, spec), flat);
  EXPECT_THROW(unflatten(Vec(3), q, spec), DimensionError);
}

TEST(Params, InitIsSeededGaussianWithZeroBiases) {
  ModelSpec spec = small("xDeepFM");
  spec.init_std = 0.05;
  const ModelParams a = init_params(spec, 3, 200, 7);
  const ModelParams b = init_params(spec, 3, 200, 7);
  EXPECT_EQ(flatten(a, spec), flatten(b, spec));
  EXPECT_NE(flatten(init_params(spec, 3, 200, 8), spec), flatten(a, spec));
  EXPECT_EQ(a.bias, 0.0);
  double s2 = 0;
  for (double v : a.embedding.table.values()) s2 += v * v;
  EXPECT_NEAR(std::sqrt(s2 / a.embedding.table.size()), 0.05, 0.005);
}

class PresetGradient : public ::testing::TestWithParam<std::string> {};

TEST_P(PresetGradient, FullObjectiveMatchesFiniteDifferences) {
  const Schema s = small_schema();
  ModelSpec spec = small(GetParam());
  spec.dnn.activation = Activation::kTanh;
  const ModelParams p = init_params(spec, 3, s.vocab_size(), 12);
  const auto r = oracle::check_gradients(random_instances(s, 6, 2), p, spec, 0.01);
  for (const auto& [name, worst] : r.worst_by_group) EXPECT_LT(worst, 1e-4) << name;
}

INSTANTIATE_TEST_SUITE_P(AllPresets, PresetGradient,
                         ::testing::Values("LR", "FM", "DNN", "CIN", "CrossNet", "DCN", "DeepFM",
                                           "xDeepFM"));

TEST(BatchObjective, LossIsMeanLoglossOfForward) {
  const Schema s = small_schema();
  const ModelSpec spec = small("DeepFM");
  const ModelParams p = init_params(spec, 3, s.vocab_size(), 3);
  const auto data = random_instances(s, 9, 6);
  const std::vector<std::size_t> idx = {0, 3, 4, 8};
  Vec preds;
  std::vector<int> labels;
  for (auto i : idx) {
    preds.push_back(forward(data[i], p, spec));
    labels.push_back(data[i].label);
  }
  const BatchStats st = batch_objective(data, idx, p, spec, 0.5);
  EXPECT_NEAR(st.loss, logloss(preds, labels), 1e-14);
  EXPECT_NEAR(st.objective, st.loss + 0.5 * l2_penalty(p, spec), 1e-14);
}

TEST(BatchObjective, FrozenFmWeightGetsNoGradientGroup) {
  ModelSpec spec = small("FM");
  spec.fm_weight_learnable = false;
  const ModelParams p = init_params(spec, 3, 12, 3);
  for (const auto& g : param_groups(p, spec)) EXPECT_NE(g.name, "fm.weight");
  EXPECT_EQ(p.fm_weight, 1.0);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const Schema s = small_schema();
  for (const auto& name : preset_names()) {
    const ModelSpec spec = small(name);
    const ModelParams p = init_params(spec, 3, s.vocab_size(), 21);
    std::istringstream in(to_bytes(p, spec, &s));
    const Checkpoint c = read_checkpoint(in);
    const Vec a = flatten(p, spec), b = flatten(c.params, c.spec);
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0) << name;
    EXPECT_EQ(c.spec.parts, spec.parts);
    EXPECT_EQ(c.seed, 5u);
    ASSERT_TRUE(c.schema.has_value());
    EXPECT_EQ(*c.schema, s);
  }
}

TEST(Checkpoint, LowRankAndCustomShapes) {
  ModelSpec spec = small("xDeepFM");
  spec.cin = {{3, 3}, Activation::kTanh, 1};
  spec.dnn.activation = Activation::kSigmoid;
  spec.fm_weight_learnable = false;
  const ModelParams p = init_params(spec, 3, 12, 4);
  std::istringstream in(to_bytes(p, spec, nullptr));
  const Checkpoint c = read_checkpoint(in);
  EXPECT_EQ(c.spec.cin.rank, 1u);
  EXPECT_EQ(c.spec.cin.activation, Activation::kTanh);
  EXPECT_EQ(c.spec.dnn.activation, Activation::kSigmoid);
  EXPECT_FALSE(c.schema.has_value());
  EXPECT_EQ(flatten(c.params, c.spec), flatten(p, spec));
}

TEST(Checkpoint, FmScoresIdenticallyAfterReload) {
  const Schema s = small_schema();
  const ModelSpec spec = small("FM");
  const ModelParams p = init_params(spec, 3, s.vocab_size(), 2);
  const auto dir = test_util::temp_dir("ckpt_fm");
  save_checkpoint((dir / "m.ckpt").string(), p, spec, &s);
  const Checkpoint c = load_checkpoint((dir / "m.ckpt").string());
  for (const auto& inst : random_instances(s, 100, 7)) {
    EXPECT_EQ(forward(inst, p, spec), forward(inst, c.params, c.spec));
  }
}

TEST(Checkpoint, CorruptionIsDetected) {
  const ModelSpec spec = small("DeepFM");
  const std::string good = to_bytes(init_params(spec, 3, 12, 1), spec, nullptr);
  const auto load = [](const std::string& bytes) {
    std::istringstream in(bytes);
    return read_checkpoint(in);
  };
  EXPECT_NO_THROW(load(good));
  std::string bad = good;
  bad[0] = 'Y';
  EXPECT_THROW(load(bad), CheckpointError);
  EXPECT_THROW(load(good.substr(0, good.size() - 3)), CheckpointError);
  EXPECT_THROW(load(good + "x"), CheckpointError);
  EXPECT_THROW(load(good.substr(0, 20)), CheckpointError);
  EXPECT_THROW(load_checkpoint("/nonexistent/model.ckpt"), CheckpointError);
}

TEST(Checkpoint, SchemaTokensWithHashesSurvive) {
  Schema s(test_util::uni_schema(2));
  s.intern(0, "#tag = x");
  s.intern(1, "pipe|less");
  const ModelSpec spec = make_preset("LR");
  std::istringstream in(to_bytes(make_params(spec, 2, s.vocab_size()), spec, &s));
  EXPECT_EQ(*read_checkpoint(in).schema, s);
}
