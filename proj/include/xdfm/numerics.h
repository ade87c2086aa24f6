#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace xdfm {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Mat(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  void fill(double v);

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Rank-3 tensor indexed (d, i, j); used for the per-dimension outer products
// between a CIN hidden layer and the field embedding matrix.
class Tensor3 {
 public:
  Tensor3(std::size_t n0, std::size_t n1, std::size_t n2)
      : n0_(n0), n1_(n1), n2_(n2), values_(n0 * n1 * n2, 0.0) {}

  std::size_t dim0() const { return n0_; }
  std::size_t dim1() const { return n1_; }
  std::size_t dim2() const { return n2_; }

  double& operator()(std::size_t a, std::size_t b, std::size_t c) {
    return values_[(a * n1_ + b) * n2_ + c];
  }
  double operator()(std::size_t a, std::size_t b, std::size_t c) const {
    return values_[(a * n1_ + b) * n2_ + c];
  }
  std::span<const double> values() const { return values_; }

 private:
  std::size_t n0_, n1_, n2_;
  std::vector<double> values_;
};

// xoshiro256** seeded through splitmix64. The stream depends only on the
// seed, so identical seeds give identical draws on every platform. Normal
// draws use Box-Muller on two uniforms, one normal per call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer on [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  void fill_normal(std::span<double> out, double stddev);

 private:
  std::uint64_t s_[4];
};

// One step of the splitmix64 sequence. Used for seeding and for deriving
// independent child seeds (per epoch, per grid combination).
std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

Vec hadamard(std::span<const double> a, std::span<const double> b);

// Z(d, i, j) = x_k(i, d) * x_0(j, d).
Tensor3 interaction_tensor(const Mat& x_k, const Mat& x_0);

double dot(std::span<const double> a, std::span<const double> b);

// out(r, c) = sum_t a(r, t) * b(t, c)
Mat matmul(const Mat& a, const Mat& b);
// out(r, c) = sum_t a(r, t) * b(c, t)
Mat matmul_bt(const Mat& a, const Mat& b);
// out(r, c) = sum_t a(t, r) * b(t, c)
Mat matmul_at(const Mat& a, const Mat& b);

double sigmoid(double z);

using ScalarFn = std::function<double(std::span<const double>)>;

inline constexpr double kDefaultFiniteDiffEps = 1e-5;

// Central differences: g[i] = (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
Vec finite_diff_grad(const ScalarFn& f, std::span<const double> point,
                     double eps = kDefaultFiniteDiffEps);

// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-8);

}  // namespace xdfm
