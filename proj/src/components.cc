#include "xdfm/components.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "xdfm/error.h"

namespace xdfm {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kRelu:
      return "relu";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kTanh:
      return "tanh";
  }
  return "identity";
}

Activation parse_activation(const std::string& text) {
  if (text == "identity" || text == "linear") return Activation::kIdentity;
  if (text == "relu") return Activation::kRelu;
  if (text == "sigmoid") return Activation::kSigmoid;
  if (text == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + text + "'");
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::kIdentity:
      return x;
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
    case Activation::kSigmoid:
      return 1.0 / (1.0 + std::exp(-x));
    case Activation::kTanh:
      return std::tanh(x);
  }
  return x;
}

double activation_grad(Activation a, double pre, double post) {
  switch (a) {
    case Activation::kIdentity:
      return 1.0;
    case Activation::kRelu:
      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kSigmoid:
      return post * (1.0 - post);
    case Activation::kTanh:
      return 1.0 - post * post;
  }
  return 1.0;
}

// --- linear -----------------------------------------------------------------

double linear_forward(const Instance& instance, const LinearPart& lp) {
  double sum = 0.0;
  for (const auto& field : instance.fields) {
    for (FeatureId id : field) {
      if (id >= lp.weights.size()) {
        throw LookupError("feature id " + std::to_string(id) + " has no linear weight");
      }
      sum += lp.weights[id];
    }
  }
  return sum;
}

void linear_backward(const Instance& instance, double upstream, LinearPart& grads) {
  for (const auto& field : instance.fields) {
    for (FeatureId id : field) grads.weights.at(id) += upstream;
  }
}

// --- FM ---------------------------------------------------------------------

double fm_pairwise(const Mat& x0) {
  double sum = 0.0;
  for (std::size_t i = 0; i < x0.rows(); ++i)
    for (std::size_t j = i + 1; j < x0.rows(); ++j) sum += dot(x0.row(i), x0.row(j));
  return sum;
}

double fm_pairwise_fast(const Mat& x0) {
  double result = 0.0;
  for (std::size_t d = 0; d < x0.cols(); ++d) {
    double s = 0.0;
    double sq = 0.0;
    for (std::size_t i = 0; i < x0.rows(); ++i) {
      s += x0(i, d);
      sq += x0(i, d) * x0(i, d);
    }
    result += s * s - sq;
  }
  return 0.5 * result;
}

void fm_pairwise_backward(const Mat& x0, double upstream, Mat& grad_x0) {
  if (grad_x0.rows() != x0.rows() || grad_x0.cols() != x0.cols()) {
    throw DimensionError("fm_pairwise_backward: gradient shape mismatch");
  }
  // d/de_i = sum_{j != i} e_j
  for (std::size_t d = 0; d < x0.cols(); ++d) {
    double s = 0.0;
    for (std::size_t i = 0; i < x0.rows(); ++i) s += x0(i, d);
    for (std::size_t i = 0; i < x0.rows(); ++i) grad_x0(i, d) += upstream * (s - x0(i, d));
  }
}

// --- DNN --------------------------------------------------------------------

DnnState make_dnn(std::size_t input_width, const DnnConfig& config) {
  DnnState dnn;
  std::size_t in = input_width;
  for (std::size_t width : config.widths) {
    if (width == 0) throw ConfigError("DNN layer width must be positive");
    dnn.layers.push_back({Mat(width, in), Vec(width, 0.0), config.activation});
    in = width;
  }
  return dnn;
}

Vec dnn_forward(std::span<const double> input, const DnnState& dnn, DnnCache* cache) {
  if (dnn.layers.empty()) return Vec(input.begin(), input.end());
  if (input.size() != dnn.input_width()) {
    throw DimensionError("dnn_forward: input width " + std::to_string(input.size()) +
                         ", expected " + std::to_string(dnn.input_width()));
  }
  if (cache) {
    cache->input.assign(input.begin(), input.end());
    cache->pre.clear();
    cache->post.clear();
  }
  Vec x(input.begin(), input.end());
  for (const auto& layer : dnn.layers) {
    Vec pre(layer.weight.rows());
    for (std::size_t r = 0; r < pre.size(); ++r) pre[r] = dot(layer.weight.row(r), x) + layer.bias[r];
    Vec post(pre.size());
    for (std::size_t r = 0; r < pre.size(); ++r) post[r] = activate(layer.activation, pre[r]);
    if (cache) {
      cache->pre.push_back(pre);
      cache->post.push_back(post);
    }
    x = std::move(post);
  }
  return x;
}

Vec dnn_backward(const DnnState& dnn, const DnnCache& cache, std::span<const double> grad_out,
                 DnnState& grads) {
  if (dnn.layers.empty()) return Vec(grad_out.begin(), grad_out.end());
  if (cache.post.size() != dnn.layers.size() || cache.input.size() != dnn.input_width()) {
    throw StateError("dnn_backward: no matching forward cache");
  }
  if (grad_out.size() != dnn.output_width()) throw DimensionError("dnn_backward: bad gradient");
  Vec g(grad_out.begin(), grad_out.end());
  for (std::size_t k = dnn.layers.size(); k-- > 0;) {
    const auto& layer = dnn.layers[k];
    auto& glayer = grads.layers[k];
    const Vec& in = k == 0 ? cache.input : cache.post[k - 1];
    Vec gin(in.size(), 0.0);
    for (std::size_t r = 0; r < g.size(); ++r) {
      const double gp = g[r] * activation_grad(layer.activation, cache.pre[k][r], cache.post[k][r]);
      if (gp == 0.0) continue;
      glayer.bias[r] += gp;
      auto gw = glayer.weight.row(r);
      auto w = layer.weight.row(r);
      for (std::size_t c = 0; c < in.size(); ++c) {
        gw[c] += gp * in[c];
        gin[c] += gp * w[c];
      }
    }
    g = std::move(gin);
  }
  return g;
}

// --- CrossNet ---------------------------------------------------------------

CrossNetState make_crossnet(std::size_t width, std::size_t depth) {
  CrossNetState cn;
  cn.layers.assign(depth, CrossLayer{Vec(width, 0.0), Vec(width, 0.0)});
  return cn;
}

Vec crossnet_forward(std::span<const double> x0, const CrossNetState& cn, CrossNetCache* cache) {
  if (cache) {
    cache->x0.assign(x0.begin(), x0.end());
    cache->inputs.clear();
    cache->scalars.clear();
  }
  Vec x(x0.begin(), x0.end());
  for (const auto& layer : cn.layers) {
    if (layer.weight.size() != x0.size() || layer.bias.size() != x0.size()) {
      throw DimensionError("crossnet_forward: layer width does not match x0");
    }
    const double s = dot(x, layer.weight);
    if (cache) {
      cache->inputs.push_back(x);
      cache->scalars.push_back(s);
    }
    for (std::size_t t = 0; t < x.size(); ++t) x[t] = x0[t] * s + layer.bias[t] + x[t];
  }
  return x;
}

Vec crossnet_backward(const CrossNetState& cn, const CrossNetCache& cache,
                      std::span<const double> grad_out, CrossNetState& grads) {
  if (cache.inputs.size() != cn.layers.size() || cache.x0.size() != grad_out.size()) {
    throw StateError("crossnet_backward: no matching forward cache");
  }
  const Vec& x0 = cache.x0;
  Vec g(grad_out.begin(), grad_out.end());
  Vec gx0(x0.size(), 0.0);
  for (std::size_t k = cn.layers.size(); k-- > 0;) {
    const auto& layer = cn.layers[k];
    auto& glayer = grads.layers[k];
    const Vec& in = cache.inputs[k];
    const double s = cache.scalars[k];
    const double gs = dot(g, x0);
    for (std::size_t t = 0; t < g.size(); ++t) {
      gx0[t] += g[t] * s;
      glayer.bias[t] += g[t];
      glayer.weight[t] += gs * in[t];
    }
    for (std::size_t t = 0; t < g.size(); ++t) g[t] += gs * layer.weight[t];
  }
  // x_0 is also the input of the first layer.
  for (std::size_t t = 0; t < g.size(); ++t) gx0[t] += g[t];
  return gx0;
}

// --- CIN --------------------------------------------------------------------

std::size_t CinState::pooled_width() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.width;
  return n;
}

Mat CinState::filter(std::size_t k, std::size_t h) const {
  const CinLayer& layer = layers.at(k);
  if (!low_rank()) {
    Mat w(layer.prev_width, fields);
    auto src = layer.filters.row(h);
    std::copy(src.begin(), src.end(), w.values().begin());
    return w;
  }
  Mat u(layer.prev_width, rank);
  Mat v(fields, rank);
  auto us = layer.u.row(h);
  auto vs = layer.v.row(h);
  std::copy(us.begin(), us.end(), u.values().begin());
  std::copy(vs.begin(), vs.end(), v.values().begin());
  return cin_low_rank_materialize(u, v);
}

void CinState::set_filter(std::size_t k, std::size_t h, const Mat& w) {
  CinLayer& layer = layers.at(k);
  if (low_rank()) throw StateError("set_filter needs full-rank filters");
  if (w.rows() != layer.prev_width || w.cols() != fields) {
    throw DimensionError("set_filter: filter shape mismatch");
  }
  auto dst = layer.filters.row(h);
  std::copy(w.values().begin(), w.values().end(), dst.begin());
}

CinState make_cin(std::size_t fields, const CinConfig& config) {
  CinState cin;
  cin.fields = fields;
  cin.rank = config.rank;
  cin.activation = config.activation;
  std::size_t prev = fields;
  for (std::size_t width : config.widths) {
    if (width == 0) throw ConfigError("CIN layer width must be positive");
    if (config.rank > 0 && config.rank >= std::min(prev, fields)) {
      throw ConfigError("CIN rank " + std::to_string(config.rank) +
                        " must be below min(H_{k-1}, m) = " + std::to_string(std::min(prev, fields)));
    }
    CinLayer layer;
    layer.prev_width = prev;
    layer.width = width;
    if (config.rank == 0) {
      layer.filters = Mat(width, prev * fields);
    } else {
      layer.u = Mat(width, prev * config.rank);
      layer.v = Mat(width, fields * config.rank);
    }
    cin.layers.push_back(std::move(layer));
    prev = width;
  }
  cin.output.assign(cin.pooled_width(), 0.0);
  return cin;
}

namespace {

// Z[(i * m + j), d] = x_prev[i, d] * x0[j, d]
Mat interaction_rows(const Mat& x_prev, const Mat& x0) {
  const std::size_t m = x0.rows();
  const std::size_t dims = x0.cols();
  Mat z(x_prev.rows() * m, dims);
  for (std::size_t i = 0; i < x_prev.rows(); ++i) {
    auto a = x_prev.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      auto b = x0.row(j);
      auto out = z.row(i * m + j);
      for (std::size_t d = 0; d < dims; ++d) out[d] = a[d] * b[d];
    }
  }
  return z;
}

// Pre-activation of one layer with factored filters:
//   X[h, d] = sum_l (sum_i U[i, l] Xp[i, d]) * (sum_j V[j, l] X0[j, d]).
Mat low_rank_layer(const CinLayer& layer, std::size_t rank, const Mat& x_prev, const Mat& x0) {
  const std::size_t dims = x0.cols();
  const std::size_t m = x0.rows();
  Mat out(layer.width, dims);
  Vec a(dims);
  Vec b(dims);
  for (std::size_t h = 0; h < layer.width; ++h) {
    auto u = layer.u.row(h);
    auto v = layer.v.row(h);
    auto o = out.row(h);
    for (std::size_t l = 0; l < rank; ++l) {
      std::fill(a.begin(), a.end(), 0.0);
      std::fill(b.begin(), b.end(), 0.0);
      for (std::size_t i = 0; i < layer.prev_width; ++i) {
        const double w = u[i * rank + l];
        auto xp = x_prev.row(i);
        for (std::size_t d = 0; d < dims; ++d) a[d] += w * xp[d];
      }
      for (std::size_t j = 0; j < m; ++j) {
        const double w = v[j * rank + l];
        auto xj = x0.row(j);
        for (std::size_t d = 0; d < dims; ++d) b[d] += w * xj[d];
      }
      for (std::size_t d = 0; d < dims; ++d) o[d] += a[d] * b[d];
    }
  }
  return out;
}

void check_layer_inputs(const Mat& x_prev, const Mat& x0, std::size_t prev_width) {
  if (x_prev.cols() != x0.cols()) throw DimensionError("CIN: embedding dimensions differ");
  if (x_prev.rows() != prev_width) {
    throw DimensionError("CIN: expected " + std::to_string(prev_width) + " input maps, got " +
                         std::to_string(x_prev.rows()));
  }
}

}  // namespace

Mat cin_layer(const Mat& x_prev, const Mat& x0, std::span<const Mat> filters,
              Activation activation) {
  if (x_prev.cols() != x0.cols()) throw DimensionError("cin_layer: embedding dimensions differ");
  const std::size_t m = x0.rows();
  Mat bank(filters.size(), x_prev.rows() * m);
  for (std::size_t h = 0; h < filters.size(); ++h) {
    if (filters[h].rows() != x_prev.rows() || filters[h].cols() != m) {
      throw DimensionError("cin_layer: filter " + std::to_string(h) + " must be " +
                           std::to_string(x_prev.rows()) + "x" + std::to_string(m));
    }
    auto src = filters[h].values();
    std::copy(src.begin(), src.end(), bank.row(h).begin());
  }
  Mat out = matmul(bank, interaction_rows(x_prev, x0));
  for (auto& v : out.values()) v = activate(activation, v);
  return out;
}

CinOutput cin_forward(const Mat& x0, const CinState& cin, CinCache* cache) {
  if (x0.rows() != cin.fields) {
    throw DimensionError("cin_forward: expected " + std::to_string(cin.fields) + " fields, got " +
                         std::to_string(x0.rows()));
  }
  if (cache) {
    cache->x0 = x0;
    cache->pre.clear();
    cache->post.clear();
  }
  CinOutput out;
  out.pooled.reserve(cin.pooled_width());
  const Mat* prev = &x0;
  for (const auto& layer : cin.layers) {
    check_layer_inputs(*prev, x0, layer.prev_width);
    Mat pre = cin.low_rank() ? low_rank_layer(layer, cin.rank, *prev, x0)
                             : matmul(layer.filters, interaction_rows(*prev, x0));
    Mat post = pre;
    if (cin.activation != Activation::kIdentity) {
      for (auto& v : post.values()) v = activate(cin.activation, v);
    }
    for (std::size_t h = 0; h < post.rows(); ++h) {
      double s = 0.0;
      for (double v : post.row(h)) s += v;
      out.pooled.push_back(s);
    }
    if (cache) cache->pre.push_back(std::move(pre));
    out.hidden.push_back(std::move(post));
    prev = &out.hidden.back();
  }
  if (cache) cache->post = out.hidden;
  return out;
}

Mat cin_backward(const CinState& cin, const CinCache& cache, std::span<const double> grad_pooled,
                 CinState& grads) {
  if (cache.post.size() != cin.layers.size() || cache.x0.rows() != cin.fields) {
    throw StateError("cin_backward: no matching forward cache");
  }
  if (grad_pooled.size() != cin.pooled_width()) {
    throw DimensionError("cin_backward: pooled gradient has wrong length");
  }
  const Mat& x0 = cache.x0;
  const std::size_t m = x0.rows();
  const std::size_t dims = x0.cols();
  Mat grad_x0(m, dims);

  // Offsets of each layer inside p+.
  std::vector<std::size_t> offset(cin.layers.size(), 0);
  for (std::size_t k = 1; k < cin.layers.size(); ++k) {
    offset[k] = offset[k - 1] + cin.layers[k - 1].width;
  }

  Mat carry;  // d loss / d X^k flowing back from layer k+1
  for (std::size_t k = cin.layers.size(); k-- > 0;) {
    const CinLayer& layer = cin.layers[k];
    CinLayer& glayer = grads.layers[k];
    const Mat& x_prev = k == 0 ? x0 : cache.post[k - 1];

    Mat g(layer.width, dims);
    for (std::size_t h = 0; h < layer.width; ++h) {
      const double gp = grad_pooled[offset[k] + h];
      auto row = g.row(h);
      for (std::size_t d = 0; d < dims; ++d) row[d] = gp;
    }
    if (!carry.empty()) {
      for (std::size_t t = 0; t < g.size(); ++t) g.values()[t] += carry.values()[t];
    }
    if (cin.activation != Activation::kIdentity) {
      for (std::size_t t = 0; t < g.size(); ++t) {
        g.values()[t] *= activation_grad(cin.activation, cache.pre[k].values()[t],
                                         cache.post[k].values()[t]);
      }
    }

    Mat grad_prev(layer.prev_width, dims);
    if (!cin.low_rank()) {
      const Mat z = interaction_rows(x_prev, x0);
      const Mat gw = matmul_bt(g, z);
      for (std::size_t t = 0; t < gw.size(); ++t) glayer.filters.values()[t] += gw.values()[t];
      const Mat gz = matmul_at(layer.filters, g);
      for (std::size_t i = 0; i < layer.prev_width; ++i) {
        auto xp = x_prev.row(i);
        auto gp = grad_prev.row(i);
        for (std::size_t j = 0; j < m; ++j) {
          auto gzr = gz.row(i * m + j);
          auto xj = x0.row(j);
          auto gx = grad_x0.row(j);
          for (std::size_t d = 0; d < dims; ++d) {
            gp[d] += gzr[d] * xj[d];
            gx[d] += gzr[d] * xp[d];
          }
        }
      }
    } else {
      const std::size_t rank = cin.rank;
      Vec a(dims);
      Vec b(dims);
      for (std::size_t h = 0; h < layer.width; ++h) {
        auto u = layer.u.row(h);
        auto v = layer.v.row(h);
        auto gu = glayer.u.row(h);
        auto gv = glayer.v.row(h);
        auto gh = g.row(h);
        for (std::size_t l = 0; l < rank; ++l) {
          std::fill(a.begin(), a.end(), 0.0);
          std::fill(b.begin(), b.end(), 0.0);
          for (std::size_t i = 0; i < layer.prev_width; ++i) {
            auto xp = x_prev.row(i);
            for (std::size_t d = 0; d < dims; ++d) a[d] += u[i * rank + l] * xp[d];
          }
          for (std::size_t j = 0; j < m; ++j) {
            auto xj = x0.row(j);
            for (std::size_t d = 0; d < dims; ++d) b[d] += v[j * rank + l] * xj[d];
          }
          // ga = gh * b, gb = gh * a
          for (std::size_t i = 0; i < layer.prev_width; ++i) {
            auto xp = x_prev.row(i);
            auto gp = grad_prev.row(i);
            double acc = 0.0;
            for (std::size_t d = 0; d < dims; ++d) {
              const double ga = gh[d] * b[d];
              acc += ga * xp[d];
              gp[d] += u[i * rank + l] * ga;
            }
            gu[i * rank + l] += acc;
          }
          for (std::size_t j = 0; j < m; ++j) {
            auto xj = x0.row(j);
            auto gx = grad_x0.row(j);
            double acc = 0.0;
            for (std::size_t d = 0; d < dims; ++d) {
              const double gb = gh[d] * a[d];
              acc += gb * xj[d];
              gx[d] += v[j * rank + l] * gb;
            }
            gv[j * rank + l] += acc;
          }
        }
      }
    }

    if (k == 0) {
      for (std::size_t t = 0; t < grad_x0.size(); ++t) grad_x0.values()[t] += grad_prev.values()[t];
    } else {
      carry = std::move(grad_prev);
    }
  }
  return grad_x0;
}

double cin_score(std::span<const double> pooled, std::span<const double> w_o) {
  if (pooled.size() != w_o.size()) throw DimensionError("cin_score: length mismatch");
  return sigmoid(dot(pooled, w_o));
}

Mat cin_low_rank_materialize(const Mat& u, const Mat& v) {
  if (u.cols() != v.cols()) {
    throw DimensionError("cin_low_rank_materialize: U and V need the same inner dimension");
  }
  return matmul_bt(u, v);
}

}  // namespace xdfm
