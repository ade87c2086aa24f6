#include <gtest/gtest.h>

#include "xdfm/embedding.h"
#include "xdfm/error.h"
#include "xdfm/model.h"
#include "xdfm/numerics.h"

using namespace xdfm;

namespace {

Instance make(std::vector<std::vector<FeatureId>> fields) {
  Instance inst;
  inst.label = 1;
  inst.fields = std::move(fields);
  return inst;
}

}  // namespace

TEST(EmbedForward, UnivalentTakesRow) {
  EmbeddingTable t(4, 2);
  t.table = Mat{{0, 0}, {0, 0}, {1.5, -2}, {3, 4}};
  const Mat x0 = embed_forward(make({{2}, {3}}), t);
  EXPECT_EQ(x0, (Mat{{1.5, -2}, {3, 4}}));
}

TEST(EmbedForward, MultivalentSums) {
  EmbeddingTable t(4, 2);
  t.table = Mat{{0, 0}, {0, 0}, {1, 0}, {0, 2}};
  const Mat x0 = embed_forward(make({{2, 3}, {}}), t);
  EXPECT_EQ(x0, (Mat{{1, 2}, {0, 0}}));
}

TEST(EmbedForward, UnknownIdThrows) {
  EmbeddingTable t(3, 2);
  EXPECT_THROW(embed_forward(make({{0}, {9}}), t), LookupError);
}

TEST(EmbedBackward, IdentityAndLinearity) {
  EmbeddingTable t(5, 2);
  const Mat g{{0.5, -1}, {2, 3}};
  const SparseGrad grads = embed_backward(make({{2}, {3, 4}}), g, t);
  ASSERT_EQ(grads.size(), 3u);
  EXPECT_EQ(grads.at(2), (Vec{0.5, -1}));
  EXPECT_EQ(grads.at(3), (Vec{2, 3}));
  EXPECT_EQ(grads.at(4), (Vec{2, 3}));
}

TEST(EmbedBackward, RepeatedFeatureAccumulates) {
  EmbeddingTable t(3, 1);
  const SparseGrad grads = embed_backward(make({{2, 2}, {}}), Mat{{1}, {0}}, t);
  EXPECT_EQ(grads.at(2), (Vec{2}));
}

TEST(EmbedBackward, ShapeMismatchThrows) {
  EmbeddingTable t(3, 2);
  EXPECT_THROW(embed_backward(make({{0}, {1}}), Mat(3, 2), t), DimensionError);
}

TEST(EmbedBackward, DenseMatchesSparse) {
  EmbeddingTable t(6, 3);
  Rng rng(2);
  Mat g(2, 3);
  rng.fill_normal(g.values(), 1.0);
  const Instance inst = make({{1, 4}, {5}});
  Mat dense(6, 3);
  embed_backward_into(inst, g, dense);
  const SparseGrad sparse = embed_backward(inst, g, t);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double expected = sparse.count(r) ? sparse.at(r)[c] : 0.0;
      EXPECT_EQ(dense(r, c), expected);
    }
  }
}

TEST(EmbedBackward, FullModelMatchesFiniteDifferences) {
  ModelSpec spec = make_preset("DeepFM");
  spec.embedding_dim = 3;
  spec.dnn.widths = {4};
  spec.dnn.activation = Activation::kTanh;
  spec.init_std = 0.5;
  const ModelParams params = init_params(spec, 2, 6, 4);
  std::vector<Instance> batch = {make({{2}, {4, 5}}), make({{3}, {5}})};
  batch[1].label = 0;
  const std::vector<std::size_t> idx = {0, 1};

  ModelParams grads = zeros_like(params, spec);
  batch_objective(batch, idx, params, spec, 0.0, &grads);
  ModelParams probe = params;
  const auto f = [&](std::span<const double> flat) {
    probe.embedding.table = Mat(6, 3);
    std::copy(flat.begin(), flat.end(), probe.embedding.table.values().begin());
    return batch_objective(batch, idx, probe, spec, 0.0).objective;
  };
  const Vec numeric = finite_diff_grad(f, params.embedding.table.values());
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    EXPECT_LT(relative_error(grads.embedding.table.values()[i], numeric[i]), 1e-4) << i;
  }
}
