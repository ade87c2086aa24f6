#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "xdfm/error.h"
#include "xdfm/numerics.h"

using namespace xdfm;

TEST(Hadamard, Elementwise) {
  EXPECT_EQ(hadamard(Vec{1, 2, 3}, Vec{4, 5, 6}), (Vec{4, 10, 18}));
  EXPECT_EQ(hadamard(Vec{1, 2, 3}, Vec{1, 1, 1}), (Vec{1, 2, 3}));
  EXPECT_EQ(hadamard(Vec{1, 2, 3}, Vec{0, 0, 0}), (Vec{0, 0, 0}));
}

TEST(Hadamard, LengthMismatchThrows) {
  EXPECT_THROW(hadamard(Vec{1, 2}, Vec{1}), DimensionError);
}

TEST(InteractionTensor, ScalarProducts) {
  const Tensor3 z = interaction_tensor(Mat{{2}}, Mat{{3}, {5}});
  ASSERT_EQ(z.dim0(), 1u);
  EXPECT_EQ(z(0, 0, 0), 6);
  EXPECT_EQ(z(0, 0, 1), 10);
}

TEST(InteractionTensor, PerDimensionSlices) {
  const Tensor3 z = interaction_tensor(Mat{{1, 2}}, Mat{{3, 4}});
  EXPECT_EQ(z(0, 0, 0), 3);
  EXPECT_EQ(z(1, 0, 0), 8);
}

TEST(InteractionTensor, ZeroBaseGivesZeros) {
  Rng rng(1);
  Mat xk(3, 4);
  rng.fill_normal(xk.values(), 1.0);
  const Tensor3 z = interaction_tensor(xk, Mat(2, 4));
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(InteractionTensor, ColumnMismatchThrows) {
  EXPECT_THROW(interaction_tensor(Mat(1, 2), Mat(2, 3)), DimensionError);
}

TEST(FiniteDiff, Square) {
  const Vec g = finite_diff_grad([](std::span<const double> x) { return x[0] * x[0]; }, Vec{3.0});
  EXPECT_NEAR(g[0], 6.0, 1e-8);
}

TEST(FiniteDiff, ConstantIsZero) {
  const Vec g = finite_diff_grad([](std::span<const double>) { return 4.0; }, Vec{1, 2, 3});
  EXPECT_EQ(g, (Vec{0, 0, 0}));
}

TEST(FiniteDiff, NonFiniteThrows) {
  const ScalarFn f = [](std::span<const double> x) {
    return x[0] > 1.0 ? std::numeric_limits<double>::infinity() : x[0];
  };
  EXPECT_THROW(finite_diff_grad(f, Vec{1.0}), EvaluationError);
  EXPECT_THROW(finite_diff_grad(f, Vec{0.0}, 0.0), EvaluationError);
}

TEST(FiniteDiff, MultivariateMatchesAnalytic) {
  const ScalarFn f = [](std::span<const double> x) { return std::sin(x[0]) * x[1] + x[1] * x[1]; };
  const Vec g = finite_diff_grad(f, Vec{0.4, -1.3});
  EXPECT_NEAR(g[0], std::cos(0.4) * -1.3, 1e-9);
  EXPECT_NEAR(g[1], std::sin(0.4) + 2 * -1.3, 1e-9);
}

TEST(Matmul, VariantsAgreeWithNaive) {
  Rng rng(5);
  Mat a(3, 4), b(4, 2), c(2, 4), d(3, 2);
  for (Mat* m : {&a, &b, &c, &d}) rng.fill_normal(m->values(), 1.0);
  const Mat ab = matmul(a, b);
  const Mat abt = matmul_bt(a, c);
  const Mat atd = matmul_at(a, d);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0, t = 0;
      for (std::size_t k = 0; k < 4; ++k) {
        s += a(i, k) * b(k, j);
        t += a(i, k) * c(j, k);
      }
      EXPECT_NEAR(ab(i, j), s, 1e-14);
      EXPECT_NEAR(abt(i, j), t, 1e-14);
    }
  }
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 3; ++k) s += a(k, i) * d(k, j);
      EXPECT_NEAR(atd(i, j), s, 1e-14);
    }
  }
  EXPECT_THROW(matmul(a, a), DimensionError);
}

TEST(Sigmoid, SymmetryAndClamp) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  for (double z : {-3.0, -0.5, 0.2, 7.0}) EXPECT_NEAR(sigmoid(z) + sigmoid(-z), 1.0, 1e-15);
  EXPECT_EQ(sigmoid(1000.0), sigmoid(35.0));
  EXPECT_GT(sigmoid(-1000.0), 0.0);
}

TEST(Rng, DeterministicPerSeed) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
  }
  EXPECT_NE(Rng(42).next_u64(), Rng(43).next_u64());
}

TEST(Rng, UniformRanges) {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.uniform_int(7), 7u);
  }
  EXPECT_THROW(rng.uniform_int(0), DimensionError);
}

TEST(Rng, NormalMoments) {
  Rng rng(9);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, DeriveSeedSeparatesSalts) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t salt = 0; salt < 1000; ++salt) seen.insert(derive_seed(7, salt));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}

TEST(RelativeError, FloorAvoidsDivisionByZero) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_NEAR(relative_error(1.0, 1.0 + 1e-6), 1e-6 / (1.0 + 1e-6), 1e-15);
  EXPECT_LT(relative_error(1e-12, 0.0), 1e-3);
}

TEST(Mat, LiteralAndRaggedLiteral) {
  const Mat m{{1, 2}, {3, 4}};
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m(1, 0), 3);
  EXPECT_THROW((Mat{{1, 2}, {3}}), DimensionError);
}
