#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "xdfm/numerics.h"

namespace xdfm {

using FeatureId = std::uint32_t;

enum class Arity { kUnivalent, kMultivalent };

std::string to_string(Arity arity);
Arity parse_arity(const std::string& text);

struct FieldDecl {
  std::string name;
  Arity arity = Arity::kUnivalent;
};

// Field declarations read from a flat `key = value` file:
//   field.<n>.name, field.<n>.arity (uni|multi), label_column.
struct SchemaConfig {
  std::vector<FieldDecl> fields;
  std::string label_column = "label";
};

SchemaConfig parse_schema_config(std::istream& in);
SchemaConfig load_schema_config(const std::string& path);

// Token under which a field's out-of-vocabulary id is serialized.
inline constexpr const char* kOovToken = "__oov__";

// Multi-field categorical schema with a global, contiguous feature id space.
// Field i owns the reserved OOV id i; discovered features follow in order of
// first appearance.
class Schema {
 public:
  Schema() = default;
  explicit Schema(SchemaConfig config);

  std::size_t num_fields() const { return config_.fields.size(); }
  std::size_t vocab_size() const { return feature_field_.size(); }
  const FieldDecl& field(std::size_t i) const { return config_.fields[i]; }
  const SchemaConfig& config() const { return config_; }
  const std::string& label_column() const { return config_.label_column; }

  FeatureId oov_id(std::size_t field) const { return static_cast<FeatureId>(field); }
  std::size_t field_of(FeatureId id) const { return feature_field_.at(id); }
  const std::string& feature_name(FeatureId id) const { return feature_name_.at(id); }

  // Returns the id of `token` in `field`, adding it when absent.
  FeatureId intern(std::size_t field, const std::string& token);
  // Returns the id of `token` in `field`, or the field's OOV id.
  FeatureId lookup(std::size_t field, const std::string& token) const;

  // Features of one field, ordered by id.
  std::vector<FeatureId> field_features(std::size_t field) const;

  bool operator==(const Schema& other) const;

 private:
  SchemaConfig config_;
  std::vector<std::map<std::string, FeatureId>> vocab_;
  std::vector<std::size_t> feature_field_;
  std::vector<std::string> feature_name_;
};

struct Instance {
  int label = 0;
  // fields[i] holds the active feature ids of field i.
  std::vector<std::vector<FeatureId>> fields;

  bool operator==(const Instance&) const = default;
};

struct Dataset {
  Schema schema;
  std::vector<Instance> instances;

  std::size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }
  std::size_t positives() const;
};

// Training-mode parse: builds a fresh vocabulary from the rows.
Dataset parse_dataset(std::istream& in, const SchemaConfig& config);
// Evaluation-mode parse: looks tokens up in a frozen schema; unseen tokens
// map to the field's OOV id.
Dataset parse_dataset(std::istream& in, const Schema& schema);

Dataset load_dataset(const std::string& path, const SchemaConfig& config);
Dataset load_dataset(const std::string& path, const Schema& schema);

// Writes the CSV form accepted by parse_dataset (label first).
void write_dataset(std::ostream& out, const Dataset& data);

void validate_instance(const Instance& inst, const Schema& schema);

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct Splits {
  Dataset train;
  Dataset valid;
  Dataset test;
};

// Seeded permutation then cut: valid and test get floor(N * r), train gets
// the rest.
Splits split(const Dataset& data, SplitRatios ratios, std::uint64_t seed);

// Index lists covering [0, n) exactly once. Without shuffling, batches keep
// the original order.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              bool shuffle, std::uint64_t seed);
std::vector<std::vector<std::size_t>> batches(const Dataset& data, std::size_t batch_size,
                                              bool shuffle, std::uint64_t seed);

struct InteractionTerm {
  std::vector<std::size_t> fields;
  double weight = 1.0;
};

struct SyntheticSpec {
  std::size_t fields = 4;
  std::size_t vocab_per_field = 8;
  std::size_t latent_dim = 4;
  std::vector<InteractionTerm> terms;
  double bias = 0.0;
  double noise_std = 0.0;
  std::size_t n_instances = 1000;
  std::uint64_t seed = 1;
};

SyntheticSpec parse_synthetic_spec(std::istream& in);
void write_synthetic_spec(std::ostream& out, const SyntheticSpec& spec);

// Generation recipe (all draws from one Rng(seed), in this order):
//   1. latent[f][v][t] ~ N(0, 1) for field f, value v, coordinate t; then each
//      field's latents are centered to zero mean over its values.
//   2. per instance: value v_f ~ U{0..V-1} for each field f in order, then
//      one noise draw n ~ N(0, 1), then u ~ U[0, 1).
//      score = bias + sum_terms weight * sum_t prod_{f in term} latent[f][v_f][t]
//              + noise_std * n
//      p = sigmoid(score), label = u < p.
// Centering makes every term carry no signal in its lower-order marginals
// under the uniform value distribution.
struct SyntheticData {
  Dataset dataset;
  // latents[f][v] is the latent vector of value v in field f.
  std::vector<std::vector<Vec>> latents;
  // values[n][f] is the value index drawn for field f of instance n.
  std::vector<std::vector<std::size_t>> values;
  Vec scores;
  Vec probabilities;
};

SyntheticData synthesize(const SyntheticSpec& spec);

// Recomputes the noiseless part of the score from the recorded latents.
double synthetic_clean_score(const SyntheticSpec& spec,
                             const std::vector<std::vector<Vec>>& latents,
                             const std::vector<std::size_t>& values);

}  // namespace xdfm
