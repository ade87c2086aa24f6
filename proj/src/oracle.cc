#include "xdfm/oracle.h"

#include <algorithm>
#include <cmath>

#include "xdfm/error.h"

namespace xdfm::oracle {

std::size_t degree(const MultiIndex& alpha) {
  std::size_t d = 0;
  for (unsigned a : alpha) d += a;
  return d;
}

std::vector<MultiIndex> multi_indices(std::size_t fields, std::size_t deg) {
  std::vector<MultiIndex> out;
  MultiIndex current(fields, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t pos, std::size_t left) {
    if (pos + 1 == fields) {
      current[pos] = static_cast<unsigned>(left);
      out.push_back(current);
      return;
    }
    for (std::size_t a = left + 1; a-- > 0;) {
      current[pos] = static_cast<unsigned>(a);
      rec(pos + 1, left - a);
    }
  };
  if (fields > 0) rec(0, deg);
  std::sort(out.begin(), out.end());
  return out;
}

double MonomialPolynomial::coefficient(const MultiIndex& alpha) const {
  auto it = terms_.find(alpha);
  return it == terms_.end() ? 0.0 : it->second;
}

void MonomialPolynomial::add(const MultiIndex& alpha, double c) {
  if (alpha.size() != fields_) throw DimensionError("multi-index has the wrong length");
  if (c == 0.0) return;
  auto [it, inserted] = terms_.try_emplace(alpha, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0.0) terms_.erase(it);
  }
}

Vec MonomialPolynomial::evaluate(const Mat& x0) const {
  if (x0.rows() != fields_) throw DimensionError("evaluate: field count mismatch");
  Vec out(x0.cols(), 0.0);
  for (const auto& [alpha, c] : terms_) {
    for (std::size_t d = 0; d < x0.cols(); ++d) {
      double term = c;
      for (std::size_t j = 0; j < fields_; ++j) {
        for (unsigned p = 0; p < alpha[j]; ++p) term *= x0(j, d);
      }
      out[d] += term;
    }
  }
  return out;
}

std::vector<std::vector<MonomialPolynomial>> expand_cin(const CinState& cin,
                                                        std::size_t max_terms) {
  if (cin.activation != Activation::kIdentity) {
    throw ConfigError("polynomial expansion needs identity CIN activation");
  }
  const std::size_t m = cin.fields;
  std::vector<MonomialPolynomial> prev;
  for (std::size_t j = 0; j < m; ++j) {
    MonomialPolynomial p(m);
    MultiIndex alpha(m, 0);
    alpha[j] = 1;
    p.add(alpha, 1.0);
    prev.push_back(std::move(p));
  }
  std::size_t total = 0;
  std::vector<std::vector<MonomialPolynomial>> out;
  for (std::size_t k = 0; k < cin.layers.size(); ++k) {
    const CinLayer& layer = cin.layers[k];
    std::vector<MonomialPolynomial> next;
    for (std::size_t h = 0; h < layer.width; ++h) {
      const Mat w = cin.filter(k, h);
      MonomialPolynomial poly(m);
      for (std::size_t i = 0; i < layer.prev_width; ++i) {
        for (const auto& [alpha, c] : prev[i].terms()) {
          for (std::size_t j = 0; j < m; ++j) {
            if (w(i, j) == 0.0) continue;
            MultiIndex grown = alpha;
            ++grown[j];
            poly.add(grown, w(i, j) * c);
          }
        }
      }
      total += poly.size();
      if (total > max_terms) {
        throw CapacityError("CIN expansion exceeds " + std::to_string(max_terms) + " monomials");
      }
      next.push_back(std::move(poly));
    }
    out.push_back(next);
    prev = std::move(next);
  }
  return out;
}

double permutation_coefficient(const CinState& cin, std::size_t k, std::size_t h,
                               const MultiIndex& alpha) {
  if (k >= cin.layers.size()) throw DimensionError("permutation_coefficient: no such layer");
  if (degree(alpha) != k + 2) return 0.0;
  std::vector<std::vector<Mat>> filters(k + 1);
  for (std::size_t t = 0; t <= k; ++t) {
    for (std::size_t f = 0; f < cin.layers[t].width; ++f) filters[t].push_back(cin.filter(t, f));
  }
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < alpha.size(); ++j) order.insert(order.end(), alpha[j], j);
  double total = 0.0;
  do {
    // chain[i] = sum over paths ending in feature map i of the current layer
    Vec chain(cin.layers[0].width);
    for (std::size_t i = 0; i < chain.size(); ++i) chain[i] = filters[0][i](order[0], order[1]);
    for (std::size_t t = 1; t <= k; ++t) {
      Vec next(cin.layers[t].width, 0.0);
      for (std::size_t i = 0; i < next.size(); ++i) {
        for (std::size_t p = 0; p < chain.size(); ++p) {
          next[i] += chain[p] * filters[t][i](p, order[t + 1]);
        }
      }
      chain = std::move(next);
    }
    total += chain[h];
  } while (std::next_permutation(order.begin(), order.end()));
  return total;
}

// --- CrossNet ---------------------------------------------------------------

namespace {

double abs_cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  return std::abs(dot(a, b)) / (na * nb);
}

}  // namespace

CollinearityResult check_crossnet_collinearity(std::size_t width, std::size_t depth,
                                               std::size_t trials, std::uint64_t seed) {
  CollinearityResult result;
  result.trials = trials;
  Rng rng(seed);
  const double w_scale = 1.0 / std::sqrt(static_cast<double>(width));
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Vec x0(width);
    do {
      rng.fill_normal(x0, 1.0);
    } while (dot(x0, x0) == 0.0);
    CrossNetState cn = make_crossnet(width, depth);
    for (auto& layer : cn.layers) rng.fill_normal(layer.weight, w_scale);

    const Vec xk = crossnet_forward(x0, cn);
    result.max_deviation = std::max(result.max_deviation, std::abs(abs_cosine(xk, x0) - 1.0));

    CrossNetState first = make_crossnet(width, 1);
    first.layers[0].weight = cn.layers[0].weight;
    const Vec x1 = crossnet_forward(x0, first);
    const double expected = dot(x0, first.layers[0].weight) + 1.0;
    const double extracted = dot(x1, x0) / dot(x0, x0);
    result.depth1_scalar_error =
        std::max(result.depth1_scalar_error, relative_error(extracted, expected, 1.0));
  }
  return result;
}

// --- parameter census -------------------------------------------------------

std::size_t cin_closed_form(std::size_t fields, const std::vector<std::size_t>& widths) {
  std::size_t total = 0;
  std::size_t prev = fields;
  for (std::size_t h : widths) {
    total += h * (1 + prev * fields);
    prev = h;
  }
  return total;
}

std::size_t dnn_closed_form(std::size_t fields, std::size_t dim,
                            const std::vector<std::size_t>& widths) {
  if (widths.empty()) return 0;
  std::size_t total = fields * dim * widths.front() + widths.back();
  for (std::size_t k = 1; k < widths.size(); ++k) total += widths[k] * widths[k - 1];
  return total;
}

ParameterCount count_parameters(const ModelSpec& spec, std::size_t fields,
                                std::size_t vocab_size) {
  ParameterCount c;
  const std::size_t dim = spec.embedding_dim;
  c.other = 1;
  if (spec.has(Part::kLinear)) c.linear = vocab_size;
  if (spec.uses_embeddings()) c.embedding = vocab_size * dim;
  if (spec.has(Part::kFm) && spec.fm_weight_learnable) c.other += 1;
  if (spec.has(Part::kDnn)) {
    std::size_t in = fields * dim;
    for (std::size_t h : spec.dnn.widths) {
      c.dnn += h * in;
      c.dnn_bias += h;
      in = h;
    }
    c.dnn += spec.dnn.widths.empty() ? 0 : spec.dnn.widths.back();
  }
  if (spec.has(Part::kCin)) {
    std::size_t prev = fields;
    for (std::size_t h : spec.cin.widths) {
      c.cin_filters += spec.cin.rank == 0 ? h * prev * fields
                                          : h * (prev * spec.cin.rank + fields * spec.cin.rank);
      c.cin_output += h;
      prev = h;
    }
  }
  if (spec.has(Part::kCross)) {
    const std::size_t width = fields * dim;
    c.cross = spec.cross_depth * 2 * width + width;
  }
  c.total = c.cin_filters + c.cin_output + c.dnn + c.dnn_bias + c.cross + c.embedding + c.linear +
            c.other;
  return c;
}

ParameterCount count_allocated(const ModelParams& params, const ModelSpec& spec) {
  ParameterCount c;
  for (const auto& g : param_groups(params, spec)) {
    const std::size_t n = g.values.size();
    const std::string& name = g.name;
    if (name == "bias" || name == "fm.weight") {
      c.other += n;
    } else if (name == "linear") {
      c.linear += n;
    } else if (name == "embedding") {
      c.embedding += n;
    } else if (name == "cin.out") {
      c.cin_output += n;
    } else if (name.starts_with("cin.")) {
      c.cin_filters += n;
    } else if (name.starts_with("dnn.") && name.ends_with(".bias")) {
      c.dnn_bias += n;
    } else if (name.starts_with("dnn.")) {
      c.dnn += n;
    } else if (name.starts_with("cross.")) {
      c.cross += n;
    } else {
      throw StateError("unclassified parameter group " + name);
    }
    c.total += n;
  }
  return c;
}

// --- FM reduction -----------------------------------------------------------

FmReductionResult check_fm_reduction(const Mat& x0, double tolerance) {
  const std::size_t m = x0.rows();
  if (m < 2) throw DimensionError("FM reduction needs at least two fields");
  CinState cin = make_cin(m, CinConfig{{1}, Activation::kIdentity, 0});
  cin.set_filter(0, 0, Mat(m, m, 1.0));
  cin.output.assign(1, 1.0);

  FmReductionResult r;
  r.pooled = cin_forward(x0, cin).pooled.at(0);
  r.pairwise = fm_pairwise(x0);
  for (std::size_t i = 0; i < m; ++i) r.diagonal += dot(x0.row(i), x0.row(i));
  const double expected = 2.0 * r.pairwise + r.diagonal;
  r.deviation = std::abs(r.pooled - expected) / std::max(1.0, std::abs(expected));
  r.passed = r.deviation <= tolerance;
  return r;
}

// --- gradients --------------------------------------------------------------

GradientCheckResult check_gradients(const std::vector<Instance>& instances,
                                    const ModelParams& params, const ModelSpec& spec,
                                    double reg_weight, const GradientHook& hook, double eps) {
  std::vector<std::size_t> batch(instances.size());
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;

  ModelParams grads = zeros_like(params, spec);
  batch_objective(instances, batch, params, spec, reg_weight, &grads);
  if (hook) hook(grads, spec);
  const Vec analytic = flatten(grads, spec);

  ModelParams probe = params;
  const ScalarFn f = [&](std::span<const double> flat) {
    unflatten(flat, probe, spec);
    return batch_objective(instances, batch, probe, spec, reg_weight).objective;
  };
  const Vec numeric = finite_diff_grad(f, flatten(params, spec), eps);

  GradientCheckResult result;
  result.parameters = analytic.size();
  std::size_t pos = 0;
  for (const auto& g : param_groups(params, spec)) {
    double worst = 0.0;
    for (std::size_t t = 0; t < g.values.size(); ++t, ++pos) {
      worst = std::max(worst, relative_error(analytic[pos], numeric[pos]));
    }
    result.worst_by_group[g.name] = worst;
    result.worst = std::max(result.worst, worst);
  }
  return result;
}

// --- suites -----------------------------------------------------------------

std::string CheckReport::to_json() const {
  nlohmann::ordered_json js;
  js["name"] = name;
  js["passed"] = passed;
  js["worst_deviation"] = worst_deviation;
  js["details"] = details;
  return js.dump();
}

namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.uniform_int(hi - lo + 1));
}

Mat random_mat(Rng& rng, std::size_t rows, std::size_t cols, double stddev = 1.0) {
  Mat m(rows, cols);
  rng.fill_normal(m.values(), stddev);
  return m;
}

void randomize_cin(CinState& cin, Rng& rng, double stddev) {
  for (auto& layer : cin.layers) {
    rng.fill_normal(layer.filters.values(), stddev);
    rng.fill_normal(layer.u.values(), stddev);
    rng.fill_normal(layer.v.values(), stddev);
  }
  rng.fill_normal(cin.output, stddev);
}

}  // namespace

CheckReport collinearity_suite(std::uint64_t seed, std::size_t trials, std::size_t max_depth) {
  CheckReport report;
  report.name = "collinearity";
  double worst = 0.0;
  double worst_scalar = 0.0;
  for (std::size_t width : {4, 12, 40}) {
    for (std::size_t depth = 1; depth <= max_depth; ++depth) {
      const auto r = check_crossnet_collinearity(width, depth, trials,
                                                 derive_seed(seed, width * 100 + depth));
      worst = std::max(worst, r.max_deviation);
      worst_scalar = std::max(worst_scalar, r.depth1_scalar_error);
    }
  }
  report.worst_deviation = worst;
  report.details["widths"] = {4, 12, 40};
  report.details["max_depth"] = max_depth;
  report.details["trials"] = trials;
  report.details["depth1_scalar_error"] = worst_scalar;
  report.passed = worst <= kCollinearityTolerance && worst_scalar <= 1e-12;
  return report;
}

CheckReport polynomial_suite(std::uint64_t seed, std::size_t draws) {
  CheckReport report;
  report.name = "polynomial";
  Rng rng(seed);
  double worst_value = 0.0;
  double worst_coeff = 0.0;
  std::size_t degree_violations = 0;
  std::size_t monomials = 0;
  for (std::size_t draw = 0; draw < draws; ++draw) {
    const std::size_t m = pick(rng, 2, 3);
    const std::size_t dim = pick(rng, 1, 2);
    const std::size_t depth = pick(rng, 1, 3);
    CinConfig config;
    for (std::size_t k = 0; k < depth; ++k) config.widths.push_back(pick(rng, 1, 3));
    CinState cin = make_cin(m, config);
    randomize_cin(cin, rng, 1.0);
    const Mat x0 = random_mat(rng, m, dim);

    const auto polys = expand_cin(cin);
    const CinOutput numeric = cin_forward(x0, cin);
    for (std::size_t k = 0; k < polys.size(); ++k) {
      const auto all = multi_indices(m, k + 2);
      for (std::size_t h = 0; h < polys[k].size(); ++h) {
        const auto& poly = polys[k][h];
        monomials += poly.size();
        for (const auto& [alpha, c] : poly.terms()) {
          if (degree(alpha) != k + 2) ++degree_violations;
        }
        const Vec value = poly.evaluate(x0);
        for (std::size_t d = 0; d < dim; ++d) {
          worst_value = std::max(worst_value, std::abs(value[d] - numeric.hidden[k](h, d)));
        }
        for (const auto& alpha : all) {
          const double a = poly.coefficient(alpha);
          const double b = permutation_coefficient(cin, k, h, alpha);
          worst_coeff = std::max(worst_coeff, std::abs(a - b) / std::max(1.0, std::abs(a)));
        }
      }
    }
  }
  report.worst_deviation = std::max(worst_value, worst_coeff);
  report.details["draws"] = draws;
  report.details["monomials"] = monomials;
  report.details["worst_value_gap"] = worst_value;
  report.details["worst_coefficient_gap"] = worst_coeff;
  report.details["degree_violations"] = degree_violations;
  report.passed = worst_value <= kPolynomialTolerance && worst_coeff <= kPolynomialTolerance &&
                  degree_violations == 0;
  return report;
}

CheckReport params_suite(std::uint64_t seed, std::size_t specs) {
  CheckReport report;
  report.name = "params";
  Rng rng(seed);
  std::size_t mismatches = 0;
  std::size_t closed_form_mismatches = 0;
  double worst = 0.0;
  const auto presets = preset_names();
  for (std::size_t s = 0; s < specs; ++s) {
    ModelSpec spec = make_preset(presets[rng.uniform_int(presets.size())]);
    const std::size_t fields = pick(rng, 2, 8);
    const std::size_t vocab = fields + pick(rng, 0, 40);
    spec.embedding_dim = pick(rng, 1, 12);
    spec.dnn.widths.clear();
    spec.cin.widths.clear();
    const std::size_t dnn_depth = pick(rng, 1, 4);
    const std::size_t cin_depth = pick(rng, 1, 4);
    for (std::size_t k = 0; k < dnn_depth; ++k) spec.dnn.widths.push_back(pick(rng, 1, 32));
    for (std::size_t k = 0; k < cin_depth; ++k) spec.cin.widths.push_back(pick(rng, 1, 16));
    spec.cross_depth = pick(rng, 1, 4);
    spec.fm_weight_learnable = rng.uniform() < 0.5;

    const ParameterCount counted = count_parameters(spec, fields, vocab);
    const ParameterCount allocated = count_allocated(make_params(spec, fields, vocab), spec);
    if (!(counted == allocated)) ++mismatches;
    worst = std::max(worst, std::abs(static_cast<double>(counted.total) -
                                     static_cast<double>(allocated.total)));

    if (spec.has(Part::kCin) &&
        counted.cin_filters + counted.cin_output != cin_closed_form(fields, spec.cin.widths)) {
      ++closed_form_mismatches;
    }
    if (spec.has(Part::kDnn) &&
        counted.dnn != dnn_closed_form(fields, spec.embedding_dim, spec.dnn.widths)) {
      ++closed_form_mismatches;
    }
  }
  report.worst_deviation = worst;
  report.details["specs"] = specs;
  report.details["allocation_mismatches"] = mismatches;
  report.details["closed_form_mismatches"] = closed_form_mismatches;
  report.passed = mismatches == 0 && closed_form_mismatches == 0;
  return report;
}

CheckReport fm_reduction_suite(std::uint64_t seed, std::size_t trials) {
  CheckReport report;
  report.name = "fm_reduction";
  Rng rng(seed);
  double worst = 0.0;
  std::size_t failures = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const Mat x0 = random_mat(rng, pick(rng, 2, 8), pick(rng, 1, 10));
    const auto r = check_fm_reduction(x0, kFmReductionTolerance);
    worst = std::max(worst, r.deviation);
    if (!r.passed) ++failures;
  }
  report.worst_deviation = worst;
  report.details["trials"] = trials;
  report.details["failures"] = failures;
  report.passed = failures == 0;
  return report;
}

CheckReport low_rank_suite(std::uint64_t seed, std::size_t shapes) {
  CheckReport report;
  report.name = "low_rank";
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t s = 0; s < shapes; ++s) {
    const std::size_t m = pick(rng, 2, 6);
    const std::size_t dim = pick(rng, 1, 5);
    const std::size_t depth = pick(rng, 1, 3);
    CinConfig factored_cfg;
    std::size_t min_width = m;
    for (std::size_t k = 0; k < depth; ++k) {
      factored_cfg.widths.push_back(pick(rng, 2, 5));
      min_width = std::min(min_width, factored_cfg.widths.back());
    }
    // rank must stay below every H_{k-1}, which excludes the last width
    std::size_t bound = m;
    for (std::size_t k = 0; k + 1 < depth; ++k) bound = std::min(bound, factored_cfg.widths[k]);
    factored_cfg.rank = pick(rng, 1, bound - 1);
    CinState factored = make_cin(m, factored_cfg);
    randomize_cin(factored, rng, 0.5);

    CinConfig full_cfg = factored_cfg;
    full_cfg.rank = 0;
    CinState full = make_cin(m, full_cfg);
    for (std::size_t k = 0; k < depth; ++k) {
      for (std::size_t h = 0; h < full.layers[k].width; ++h) {
        full.set_filter(k, h, factored.filter(k, h));
      }
    }
    const Mat x0 = random_mat(rng, m, dim);
    const CinOutput a = cin_forward(x0, factored);
    const CinOutput b = cin_forward(x0, full);
    for (std::size_t k = 0; k < depth; ++k) {
      for (std::size_t t = 0; t < a.hidden[k].size(); ++t) {
        const double va = a.hidden[k].values()[t];
        const double vb = b.hidden[k].values()[t];
        worst = std::max(worst, std::abs(va - vb) / std::max(1.0, std::abs(vb)));
      }
    }
  }
  report.worst_deviation = worst;
  report.details["shapes"] = shapes;
  report.passed = worst <= kLowRankTolerance;
  return report;
}

namespace {

struct GradientCase {
  ModelSpec spec;
  ModelParams params;
  std::vector<Instance> instances;
  double reg_weight = 0.0;
};

GradientCase random_gradient_case(Rng& rng) {
  GradientCase gc;
  const std::size_t m = pick(rng, 2, 5);
  const std::size_t dim = pick(rng, 1, 4);
  SchemaConfig config;
  for (std::size_t f = 0; f < m; ++f) {
    const Arity arity = rng.uniform() < 0.3 ? Arity::kMultivalent : Arity::kUnivalent;
    config.fields.push_back({"f" + std::to_string(f), arity});
  }
  Schema schema(config);
  std::vector<std::vector<FeatureId>> values(m);
  for (std::size_t f = 0; f < m; ++f) {
    const std::size_t n = pick(rng, 1, 3);
    for (std::size_t v = 0; v < n; ++v) values[f].push_back(schema.intern(f, "v" + std::to_string(v)));
  }

  ModelSpec& spec = gc.spec;
  spec.parts = static_cast<unsigned>(Part::kLinear) | static_cast<unsigned>(Part::kFm) |
               static_cast<unsigned>(Part::kDnn) | static_cast<unsigned>(Part::kCin) |
               static_cast<unsigned>(Part::kCross);
  spec.preset = "gradient-check";
  spec.embedding_dim = dim;
  spec.dnn.widths.clear();
  const std::size_t dnn_depth = pick(rng, 1, 2);
  for (std::size_t k = 0; k < dnn_depth; ++k) spec.dnn.widths.push_back(pick(rng, 1, 8));
  const Activation acts[] = {Activation::kRelu, Activation::kTanh, Activation::kSigmoid,
                             Activation::kIdentity};
  spec.dnn.activation = acts[rng.uniform_int(4)];
  spec.cin.widths.clear();
  const std::size_t cin_depth = pick(rng, 1, 3);
  for (std::size_t k = 0; k < cin_depth; ++k) spec.cin.widths.push_back(pick(rng, 1, 3));
  spec.cin.activation = acts[rng.uniform_int(4)];
  std::size_t bound = m;
  for (std::size_t k = 0; k + 1 < cin_depth; ++k) bound = std::min(bound, spec.cin.widths[k]);
  spec.cin.rank = (bound >= 2 && rng.uniform() < 0.3) ? 1 : 0;
  spec.cross_depth = pick(rng, 1, 3);
  spec.init_std = 0.3;

  gc.params = init_params(spec, m, schema.vocab_size(), rng.next_u64());
  gc.params.bias = rng.normal(0.0, 0.3);
  for (auto& layer : gc.params.dnn.layers) rng.fill_normal(layer.bias, 0.3);
  for (auto& layer : gc.params.cross.layers) rng.fill_normal(layer.bias, 0.3);
  gc.params.fm_weight = rng.normal(1.0, 0.3);

  const std::size_t n = pick(rng, 3, 6);
  for (std::size_t i = 0; i < n; ++i) {
    Instance inst;
    inst.label = static_cast<int>(rng.uniform_int(2));
    inst.fields.resize(m);
    for (std::size_t f = 0; f < m; ++f) {
      if (config.fields[f].arity == Arity::kUnivalent) {
        inst.fields[f].push_back(values[f][rng.uniform_int(values[f].size())]);
      } else {
        const std::size_t k = pick(rng, 0, 2);
        for (std::size_t t = 0; t < k; ++t) {
          inst.fields[f].push_back(values[f][rng.uniform_int(values[f].size())]);
        }
      }
    }
    gc.instances.push_back(std::move(inst));
  }
  gc.reg_weight = 1e-2 * rng.uniform();
  return gc;
}

}  // namespace

CheckReport gradient_suite(std::uint64_t seed, std::size_t configs, const GradientHook& hook) {
  CheckReport report;
  report.name = "gradients";
  Rng rng(seed);
  double worst = 0.0;
  std::size_t parameters = 0;
  std::map<std::string, double> worst_by_group;
  for (std::size_t c = 0; c < configs; ++c) {
    const GradientCase gc = random_gradient_case(rng);
    const auto r = check_gradients(gc.instances, gc.params, gc.spec, gc.reg_weight, hook);
    worst = std::max(worst, r.worst);
    parameters += r.parameters;
    for (const auto& [name, v] : r.worst_by_group) {
      // Group names carry layer indices; fold them into the part.
      std::string key = name.substr(0, name.find('.'));
      if (name.ends_with(".bias")) key += ".bias";
      worst_by_group[key] = std::max(worst_by_group[key], v);
    }
  }
  report.worst_deviation = worst;
  report.details["configs"] = configs;
  report.details["parameters_checked"] = parameters;
  report.details["worst_by_group"] = worst_by_group;
  report.passed = worst <= kGradientTolerance;
  return report;
}

}  // namespace xdfm::oracle
