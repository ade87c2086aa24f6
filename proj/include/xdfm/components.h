#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "xdfm/data.h"
#include "xdfm/numerics.h"

namespace xdfm {

enum class Activation { kIdentity, kRelu, kSigmoid, kTanh };

std::string to_string(Activation a);
Activation parse_activation(const std::string& text);

double activate(Activation a, double x);
// Derivative expressed through the pre-activation and the activated value.
double activation_grad(Activation a, double pre, double post);

// ---------------------------------------------------------------------------
// Linear part: w_linear^T a over the raw one-hot (multi-hot) features.

struct LinearPart {
  Vec weights;  // indexed by feature id
};

double linear_forward(const Instance& instance, const LinearPart& lp);
void linear_backward(const Instance& instance, double upstream, LinearPart& grads);

// ---------------------------------------------------------------------------
// FM second-order term: sum over field pairs i < j of <e_i, e_j>.

double fm_pairwise(const Mat& x0);
// Same value through 0.5 * (|sum e|^2 - sum |e|^2).
double fm_pairwise_fast(const Mat& x0);
void fm_pairwise_backward(const Mat& x0, double upstream, Mat& grad_x0);

// ---------------------------------------------------------------------------
// Plain feed-forward network on the flattened field embeddings.

struct DnnConfig {
  std::vector<std::size_t> widths;
  Activation activation = Activation::kRelu;
};

struct DnnLayer {
  Mat weight;  // out x in
  Vec bias;
  Activation activation = Activation::kRelu;
};

struct DnnState {
  std::vector<DnnLayer> layers;

  std::size_t input_width() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  std::size_t output_width() const { return layers.empty() ? 0 : layers.back().weight.rows(); }
};

DnnState make_dnn(std::size_t input_width, const DnnConfig& config);

struct DnnCache {
  Vec input;
  std::vector<Vec> pre;
  std::vector<Vec> post;
};

// Returns the last hidden vector; the output unit lives in the model.
Vec dnn_forward(std::span<const double> input, const DnnState& dnn, DnnCache* cache = nullptr);
// Accumulates parameter gradients into `grads` and returns d loss / d input.
Vec dnn_backward(const DnnState& dnn, const DnnCache& cache, std::span<const double> grad_out,
                 DnnState& grads);

// ---------------------------------------------------------------------------
// Cross network: x_k = x0 * (x_{k-1} . w_k) + b_k + x_{k-1}.

struct CrossLayer {
  Vec weight;
  Vec bias;
};

struct CrossNetState {
  std::vector<CrossLayer> layers;
};

CrossNetState make_crossnet(std::size_t width, std::size_t depth);

struct CrossNetCache {
  Vec x0;
  std::vector<Vec> inputs;  // x_{k-1} for each layer
  Vec scalars;              // x_{k-1} . w_k
};

Vec crossnet_forward(std::span<const double> x0, const CrossNetState& cn,
                     CrossNetCache* cache = nullptr);
Vec crossnet_backward(const CrossNetState& cn, const CrossNetCache& cache,
                      std::span<const double> grad_out, CrossNetState& grads);

// ---------------------------------------------------------------------------
// Compressed interaction network.
//
// Feature map h of layer k is
//   X^k[h, d] = act( sum_{i, j} W^{k,h}[i, j] * X^{k-1}[i, d] * X^0[j, d] ),
// with H_0 = m. Each map is sum-pooled over d and the pooled vectors of all
// layers are concatenated into p+.

struct CinConfig {
  std::vector<std::size_t> widths;
  Activation activation = Activation::kIdentity;
  // 0 keeps full filters; otherwise W^{k,h} = U^{k,h} V^{k,h}^T with inner
  // dimension `rank`.
  std::size_t rank = 0;
};

struct CinLayer {
  std::size_t prev_width = 0;
  std::size_t width = 0;
  // Full rank: row h is W^{k,h} (prev_width x fields) in row-major order.
  Mat filters;
  // Low rank: row h of `u` is U^{k,h} (prev_width x rank), row h of `v` is
  // V^{k,h} (fields x rank), both row-major.
  Mat u;
  Mat v;
};

struct CinState {
  std::size_t fields = 0;
  std::size_t rank = 0;
  Activation activation = Activation::kIdentity;
  std::vector<CinLayer> layers;
  Vec output;  // w^o, one weight per pooled entry

  std::size_t depth() const { return layers.size(); }
  std::size_t pooled_width() const;
  bool low_rank() const { return rank > 0; }

  // W^{k,h} for layer index k (0-based) and map h, materialized when factored.
  Mat filter(std::size_t k, std::size_t h) const;
  void set_filter(std::size_t k, std::size_t h, const Mat& w);
};

CinState make_cin(std::size_t fields, const CinConfig& config);

// One CIN layer with explicit filters, each H_{k-1} x m.
Mat cin_layer(const Mat& x_prev, const Mat& x0, std::span<const Mat> filters,
              Activation activation = Activation::kIdentity);

struct CinOutput {
  Vec pooled;
  std::vector<Mat> hidden;  // X^1..X^T, after activation
};

struct CinCache {
  Mat x0;
  std::vector<Mat> pre;
  std::vector<Mat> post;
};

CinOutput cin_forward(const Mat& x0, const CinState& cin, CinCache* cache = nullptr);
// Returns d loss / d X^0 and accumulates filter gradients into `grads`.
// `grad_pooled` is d loss / d p+; output weights are handled by the caller.
Mat cin_backward(const CinState& cin, const CinCache& cache, std::span<const double> grad_pooled,
                 CinState& grads);

// sigmoid(p+ . w^o)
double cin_score(std::span<const double> pooled, std::span<const double> w_o);

// W = U V^T
Mat cin_low_rank_materialize(const Mat& u, const Mat& v);

}  // namespace xdfm
