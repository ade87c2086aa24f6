#include "xdfm/numerics.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "xdfm/error.h"

namespace xdfm {

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  values_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("ragged matrix literal");
    values_.insert(values_.end(), r.begin(), r.end());
  }
}

void Mat::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t state = base ^ (salt * 0xd1342543de82ef95ULL);
  return splitmix64(state);
}

namespace {

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t state = seed;
  for (auto& s : s_) s = splitmix64(state);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw DimensionError("uniform_int needs a positive bound");
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void Rng::fill_normal(std::span<double> out, double stddev) {
  for (auto& v : out) v = stddev * normal();
}

Vec hadamard(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("hadamard: length " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  Vec out(a.size());
  for (std::size_t t = 0; t < a.size(); ++t) out[t] = a[t] * b[t];
  return out;
}

Tensor3 interaction_tensor(const Mat& x_k, const Mat& x_0) {
  if (x_k.cols() != x_0.cols()) {
    throw DimensionError("interaction_tensor: column mismatch");
  }
  const std::size_t dims = x_k.cols();
  Tensor3 z(dims, x_k.rows(), x_0.rows());
  for (std::size_t d = 0; d < dims; ++d)
    for (std::size_t i = 0; i < x_k.rows(); ++i)
      for (std::size_t j = 0; j < x_0.rows(); ++j) z(d, i, j) = x_k(i, d) * x_0(j, d);
  return z;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) s += a[t] * b[t];
  return s;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimension mismatch");
  Mat out(a.rows(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t t = 0; t < a.cols(); ++t) {
      const double av = a(r, t);
      if (av == 0.0) continue;
      auto br = b.row(t);
      for (std::size_t c = 0; c < b.cols(); ++c) o[c] += av * br[c];
    }
  }
  return out;
}

Mat matmul_bt(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) throw DimensionError("matmul_bt: inner dimension mismatch");
  Mat out(a.rows(), b.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < b.rows(); ++c) out(r, c) = dot(a.row(r), b.row(c));
  return out;
}

Mat matmul_at(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) throw DimensionError("matmul_at: inner dimension mismatch");
  Mat out(a.cols(), b.cols());
  for (std::size_t t = 0; t < a.rows(); ++t) {
    auto br = b.row(t);
    for (std::size_t r = 0; r < a.cols(); ++r) {
      const double av = a(t, r);
      if (av == 0.0) continue;
      auto o = out.row(r);
      for (std::size_t c = 0; c < b.cols(); ++c) o[c] += av * br[c];
    }
  }
  return out;
}

double sigmoid(double z) {
  // exp() overflows well past this range; the output is already 0/1 to f64
  // precision at the clamp.
  z = std::clamp(z, -35.0, 35.0);
  return 1.0 / (1.0 + std::exp(-z));
}

Vec finite_diff_grad(const ScalarFn& f, std::span<const double> point, double eps) {
  if (!(eps > 0.0)) throw EvaluationError("finite_diff_grad: eps must be positive");
  Vec x(point.begin(), point.end());
  Vec grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = f(x);
    x[i] = saved - eps;
    const double down = f(x);
    x[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw EvaluationError("finite_diff_grad: non-finite value at coordinate " +
                            std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace xdfm
