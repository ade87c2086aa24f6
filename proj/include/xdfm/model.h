#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xdfm/components.h"
#include "xdfm/data.h"
#include "xdfm/embedding.h"
#include "xdfm/numerics.h"

namespace xdfm {

enum class Part : unsigned {
  kLinear = 1u << 0,
  kFm = 1u << 1,
  kDnn = 1u << 2,
  kCin = 1u << 3,
  kCross = 1u << 4,
};

// Which parts feed the output unit, plus the shape of each part.
struct ModelSpec {
  unsigned parts = 0;
  std::string preset = "custom";
  std::size_t embedding_dim = 10;
  DnnConfig dnn{{400, 400}, Activation::kRelu};
  CinConfig cin{{100, 100, 100}, Activation::kIdentity, 0};
  std::size_t cross_depth = 3;
  // When false the FM term enters the sum with a frozen weight of 1.
  bool fm_weight_learnable = true;
  // Stddev of the Gaussian used for every weight and embedding entry.
  double init_std = 0.01;

  bool has(Part p) const { return (parts & static_cast<unsigned>(p)) != 0; }
  void enable(Part p) { parts |= static_cast<unsigned>(p); }
  void disable(Part p) { parts &= ~static_cast<unsigned>(p); }
  bool uses_embeddings() const {
    return has(Part::kFm) || has(Part::kDnn) || has(Part::kCin) || has(Part::kCross);
  }
};

// LR, FM, DNN, CIN, CrossNet, DCN, DeepFM, xDeepFM (case-insensitive).
ModelSpec make_preset(const std::string& name);
std::vector<std::string> preset_names();
std::string parts_to_string(unsigned parts);
unsigned parse_parts(const std::string& text);
void validate_spec(const ModelSpec& spec);

// Every learnable quantity of the model. Parts that are disabled in the
// spec keep empty storage.
struct ModelParams {
  std::size_t fields = 0;
  EmbeddingTable embedding;
  LinearPart linear;
  DnnState dnn;
  Vec dnn_out;  // w_dnn
  CinState cin;  // cin.output is w_cin
  CrossNetState cross;
  Vec cross_out;
  double fm_weight = 1.0;
  double bias = 0.0;
};

// Zero-filled parameters shaped for `spec`; fm_weight starts at 1.
ModelParams make_params(const ModelSpec& spec, std::size_t fields, std::size_t vocab_size);
// Gaussian(0, spec.init_std) on weights and embeddings; biases stay zero.
void init_params(ModelParams& params, const ModelSpec& spec, Rng& rng);
ModelParams init_params(const ModelSpec& spec, std::size_t fields, std::size_t vocab_size,
                        std::uint64_t seed);

template <typename T>
struct BasicParamGroup {
  std::string name;
  std::span<T> values;
  bool regularized = false;
};
using ParamGroup = BasicParamGroup<double>;
using ConstParamGroup = BasicParamGroup<const double>;

// Learnable groups in a fixed, documented order (also the checkpoint order).
// The regularized set covers linear, DNN, CIN, CrossNet weights and the
// combination weights; embeddings and biases are excluded.
std::vector<ParamGroup> param_groups(ModelParams& params, const ModelSpec& spec);
std::vector<ConstParamGroup> param_groups(const ModelParams& params, const ModelSpec& spec);

std::size_t num_parameters(const ModelParams& params, const ModelSpec& spec);
Vec flatten(const ModelParams& params, const ModelSpec& spec);
void unflatten(std::span<const double> flat, ModelParams& params, const ModelSpec& spec);

struct ForwardCache {
  Mat x0;
  DnnCache dnn;
  CinCache cin;
  CrossNetCache cross;
  Vec dnn_hidden;
  Vec pooled;
  Vec cross_hidden;
  double fm = 0.0;
  double logit = 0.0;
  bool valid = false;
};

// Pre-sigmoid output: sum of enabled part contributions plus the bias.
double logit(const Instance& instance, const ModelParams& params, const ModelSpec& spec,
             ForwardCache* cache = nullptr);
// Predicted click probability.
double forward(const Instance& instance, const ModelParams& params, const ModelSpec& spec);
// Accumulates d(upstream * logit)/d theta into `grads`.
void backward(const Instance& instance, const ModelParams& params, const ModelSpec& spec,
              const ForwardCache& cache, double upstream, ModelParams& grads);

inline constexpr double kProbabilityClamp = 1e-12;
inline constexpr double kDefaultLambda = 1e-4;

double clamp_probability(double p);
double logloss(std::span<const double> preds, std::span<const int> labels);

// Squared L2 norm over the regularized groups.
double l2_penalty(const ModelParams& params, const ModelSpec& spec);
// J = loss + lambda * penalty
double objective(double loss, const ModelParams& params, const ModelSpec& spec, double lambda);

struct BatchStats {
  double loss = 0.0;       // mean logloss over the batch
  double objective = 0.0;  // loss + reg_weight * penalty
};

// Mean logloss of the batch plus reg_weight * penalty. When `grads` is given
// it receives the full gradient (it must be zero-shaped like `params`).
BatchStats batch_objective(const std::vector<Instance>& instances,
                           std::span<const std::size_t> batch, const ModelParams& params,
                           const ModelSpec& spec, double reg_weight,
                           ModelParams* grads = nullptr);

// Zero-filled copy with the same shapes.
ModelParams zeros_like(const ModelParams& params, const ModelSpec& spec);
// Zeroes every learnable group in place.
void zero_fill(ModelParams& params, const ModelSpec& spec);

// --- checkpoint -------------------------------------------------------------
//
// Layout: the magic line "XFM1", a text header of `key = value` lines (spec,
// shapes, seed, optional schema vocabulary as JSON), a blank line, then every
// parameter group in param_groups() order as little-endian IEEE-754 doubles.

struct Checkpoint {
  ModelParams params;
  ModelSpec spec;
  std::optional<Schema> schema;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const ModelParams& params, const ModelSpec& spec,
                     const Schema* schema = nullptr, std::uint64_t seed = 0);
Checkpoint load_checkpoint(const std::string& path);

void write_checkpoint(std::ostream& out, const ModelParams& params, const ModelSpec& spec,
                      const Schema* schema, std::uint64_t seed);
Checkpoint read_checkpoint(std::istream& in);

}  // namespace xdfm
