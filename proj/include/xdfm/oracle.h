#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "xdfm/components.h"
#include "xdfm/model.h"
#include "xdfm/numerics.h"

namespace xdfm::oracle {

// Exponents over the m fields; the degree is their sum.
using MultiIndex = std::vector<unsigned>;

std::size_t degree(const MultiIndex& alpha);
// All multi-indices over `fields` with the given degree, lexicographic.
std::vector<MultiIndex> multi_indices(std::size_t fields, std::size_t degree);

// sum_alpha w_alpha * x_1^alpha_1 o ... o x_m^alpha_m, with elementwise
// powers and Hadamard products over the embedding rows. Zero coefficients are
// never stored.
class MonomialPolynomial {
 public:
  explicit MonomialPolynomial(std::size_t fields = 0) : fields_(fields) {}

  std::size_t fields() const { return fields_; }
  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }
  const std::map<MultiIndex, double>& terms() const { return terms_; }

  double coefficient(const MultiIndex& alpha) const;
  void add(const MultiIndex& alpha, double coefficient);

  // Value of the polynomial at the rows of x0 (one entry per column).
  Vec evaluate(const Mat& x0) const;

 private:
  std::size_t fields_;
  std::map<MultiIndex, double> terms_;
};

inline constexpr std::size_t kMaxMonomials = 1'000'000;

// Layer-by-layer symbolic expansion of an identity-activation CIN:
// result[k][h] is feature map h of layer k + 1 as a polynomial in X^0 rows.
std::vector<std::vector<MonomialPolynomial>> expand_cin(const CinState& cin,
                                                        std::size_t max_terms = kMaxMonomials);

// Coefficient of `alpha` in feature map h of layer index k (0-based) from the
// permutation form: sum over every distinct ordering B of alpha's field
// indices and every chain of intermediate feature maps of
//   W^{1,i_1}[B_1, B_2] * W^{2,i_2}[i_1, B_3] * ... * W^{k+1,h}[i_k, B_{k+2}].
double permutation_coefficient(const CinState& cin, std::size_t k, std::size_t h,
                               const MultiIndex& alpha);

struct CollinearityResult {
  // max over trials of | |cos(x_k, x0)| - 1 |
  double max_deviation = 0.0;
  // Depth-1 check: max relative gap between the extracted scalar x1 / x0 and
  // x0 . w1 + 1.
  double depth1_scalar_error = 0.0;
  std::size_t trials = 0;
};

// Runs the bias-free cross recursion x_{i+1} = x0 (x_i . w_{i+1}) + x_i.
CollinearityResult check_crossnet_collinearity(std::size_t width, std::size_t depth,
                                               std::size_t trials, std::uint64_t seed);

struct ParameterCount {
  std::size_t cin_filters = 0;
  std::size_t cin_output = 0;
  // Weight matrices plus the output weights, no biases.
  std::size_t dnn = 0;
  std::size_t dnn_bias = 0;
  std::size_t cross = 0;
  std::size_t embedding = 0;
  std::size_t linear = 0;
  // Global bias and the learnable FM weight.
  std::size_t other = 0;
  std::size_t total = 0;

  bool operator==(const ParameterCount&) const = default;
};

// Counted from the spec's shapes alone.
ParameterCount count_parameters(const ModelSpec& spec, std::size_t fields, std::size_t vocab_size);
// Counted from the storage a ModelParams actually holds.
ParameterCount count_allocated(const ModelParams& params, const ModelSpec& spec);

// sum_k H_k (1 + H_{k-1} m)
std::size_t cin_closed_form(std::size_t fields, const std::vector<std::size_t>& widths);
// m D H_1 + H_T + sum_{k>=2} H_k H_{k-1}
std::size_t dnn_closed_form(std::size_t fields, std::size_t dim,
                            const std::vector<std::size_t>& widths);

struct FmReductionResult {
  double pooled = 0.0;
  double pairwise = 0.0;
  double diagonal = 0.0;
  double deviation = 0.0;
  bool passed = false;
};

// Depth-1 CIN with a single all-ones filter against 2 * pairwise + diagonal.
FmReductionResult check_fm_reduction(const Mat& x0, double tolerance = 1e-10);

struct CheckReport {
  std::string name;
  bool passed = false;
  double worst_deviation = 0.0;
  nlohmann::ordered_json details = nlohmann::ordered_json::object();

  std::string to_json() const;
};

// Applied to analytic gradients before comparison; lets tests plant a fault.
using GradientHook = std::function<void(ModelParams& grads, const ModelSpec& spec)>;

struct GradientCheckResult {
  std::map<std::string, double> worst_by_group;
  double worst = 0.0;
  std::size_t parameters = 0;
};

// Analytic gradient of the batch objective against central differences on
// every learnable entry.
GradientCheckResult check_gradients(const std::vector<Instance>& instances,
                                    const ModelParams& params, const ModelSpec& spec,
                                    double reg_weight, const GradientHook& hook = {},
                                    double eps = kDefaultFiniteDiffEps);

// Suites behind `verify`; defaults match the acceptance sizes.
CheckReport collinearity_suite(std::uint64_t seed = 7, std::size_t trials = 100,
                               std::size_t max_depth = 6);
CheckReport polynomial_suite(std::uint64_t seed = 11, std::size_t draws = 20);
CheckReport params_suite(std::uint64_t seed = 13, std::size_t specs = 50);
CheckReport fm_reduction_suite(std::uint64_t seed = 17, std::size_t trials = 100);
CheckReport gradient_suite(std::uint64_t seed = 19, std::size_t configs = 20,
                           const GradientHook& hook = {});
CheckReport low_rank_suite(std::uint64_t seed = 23, std::size_t shapes = 50);

inline constexpr double kGradientTolerance = 1e-4;
inline constexpr double kCollinearityTolerance = 1e-10;
inline constexpr double kPolynomialTolerance = 1e-8;
inline constexpr double kFmReductionTolerance = 1e-10;
inline constexpr double kLowRankTolerance = 1e-12;

}  // namespace xdfm::oracle
