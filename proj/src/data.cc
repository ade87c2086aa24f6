#include "xdfm/data.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "xdfm/error.h"
#include "xdfm/kv.h"

namespace xdfm {

std::string to_string(Arity arity) {
  return arity == Arity::kUnivalent ? "uni" : "multi";
}

Arity parse_arity(const std::string& text) {
  if (text == "uni" || text == "univalent") return Arity::kUnivalent;
  if (text == "multi" || text == "multivalent") return Arity::kMultivalent;
  throw ConfigError("unknown arity '" + text + "' (expected uni or multi)");
}

SchemaConfig parse_schema_config(std::istream& in) {
  const KeyValues kv = parse_key_values(in);
  SchemaConfig config;
  std::map<std::size_t, FieldDecl> by_index;
  std::map<std::size_t, bool> has_name;
  for (const auto& [key, value] : kv) {
    if (key == "label_column") {
      config.label_column = value;
      continue;
    }
    const auto parts = split_string(key, '.');
    if (parts.size() != 3 || parts[0] != "field") {
      throw ConfigError("unknown schema key '" + key + "'");
    }
    const auto n = static_cast<std::size_t>(parse_uint(key, parts[1]));
    if (parts[2] == "name") {
      by_index[n].name = value;
      has_name[n] = true;
    } else if (parts[2] == "arity") {
      by_index[n].arity = parse_arity(value);
    } else {
      throw ConfigError("unknown schema key '" + key + "'");
    }
  }
  for (auto& [n, decl] : by_index) {
    if (!has_name[n] || decl.name.empty()) {
      throw ConfigError("field." + std::to_string(n) + " has no name");
    }
    config.fields.push_back(decl);
  }
  return config;
}

SchemaConfig load_schema_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema config " + path);
  return parse_schema_config(in);
}

Schema::Schema(SchemaConfig config) : config_(std::move(config)) {
  if (config_.fields.size() < 2) {
    throw ConfigError("schema needs at least 2 fields, got " +
                      std::to_string(config_.fields.size()));
  }
  for (std::size_t i = 0; i < config_.fields.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (config_.fields[i].name == config_.fields[j].name) {
        throw ConfigError("duplicate field '" + config_.fields[i].name + "'");
      }
    }
    if (config_.fields[i].name == config_.label_column) {
      throw ConfigError("field '" + config_.fields[i].name + "' collides with the label column");
    }
  }
  vocab_.resize(config_.fields.size());
  for (std::size_t i = 0; i < config_.fields.size(); ++i) {
    vocab_[i][kOovToken] = static_cast<FeatureId>(i);
    feature_field_.push_back(i);
    feature_name_.push_back(kOovToken);
  }
}

FeatureId Schema::intern(std::size_t field, const std::string& token) {
  auto& vocab = vocab_.at(field);
  auto it = vocab.find(token);
  if (it != vocab.end()) return it->second;
  const auto id = static_cast<FeatureId>(feature_field_.size());
  vocab.emplace(token, id);
  feature_field_.push_back(field);
  feature_name_.push_back(token);
  return id;
}

FeatureId Schema::lookup(std::size_t field, const std::string& token) const {
  const auto& vocab = vocab_.at(field);
  auto it = vocab.find(token);
  return it == vocab.end() ? oov_id(field) : it->second;
}

std::vector<FeatureId> Schema::field_features(std::size_t field) const {
  std::vector<FeatureId> out;
  for (std::size_t id = 0; id < feature_field_.size(); ++id) {
    if (feature_field_[id] == field) out.push_back(static_cast<FeatureId>(id));
  }
  return out;
}

bool Schema::operator==(const Schema& other) const {
  if (config_.label_column != other.config_.label_column) return false;
  if (config_.fields.size() != other.config_.fields.size()) return false;
  for (std::size_t i = 0; i < config_.fields.size(); ++i) {
    if (config_.fields[i].name != other.config_.fields[i].name ||
        config_.fields[i].arity != other.config_.fields[i].arity) {
      return false;
    }
  }
  return feature_field_ == other.feature_field_ && feature_name_ == other.feature_name_;
}

std::size_t Dataset::positives() const {
  return static_cast<std::size_t>(std::count_if(
      instances.begin(), instances.end(), [](const Instance& i) { return i.label == 1; }));
}

namespace {

struct ColumnMap {
  std::size_t label = 0;
  // field_column[i] is the CSV column holding field i.
  std::vector<std::size_t> field_column;
  std::size_t columns = 0;
};

std::vector<std::string> split_row(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return split_string(line, ',');
}

ColumnMap map_header(const std::string& header_line, const SchemaConfig& config) {
  const auto header = split_row(header_line);
  ColumnMap map;
  map.columns = header.size();
  map.field_column.assign(config.fields.size(), header.size());
  bool found_label = false;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = trim(header[c]);
    if (name == config.label_column) {
      found_label = true;
      map.label = c;
      continue;
    }
    bool declared = false;
    for (std::size_t f = 0; f < config.fields.size(); ++f) {
      if (config.fields[f].name == name) {
        map.field_column[f] = c;
        declared = true;
      }
    }
    if (!declared) throw ConfigError("column '" + name + "' is not declared in the schema");
  }
  if (!found_label) throw ConfigError("label column '" + config.label_column + "' missing");
  for (std::size_t f = 0; f < config.fields.size(); ++f) {
    if (map.field_column[f] == header.size()) {
      throw ConfigError("schema field '" + config.fields[f].name + "' has no CSV column");
    }
  }
  return map;
}

template <typename Resolve>
Dataset parse_rows(std::istream& in, Schema schema, Resolve resolve) {
  Dataset data;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing header row");
  const ColumnMap map = map_header(line, schema.config());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_row(line);
    if (cells.size() != map.columns) {
      throw ParseError(line_no, "expected " + std::to_string(map.columns) + " columns, got " +
                                    std::to_string(cells.size()));
    }
    Instance inst;
    const std::string label = trim(cells[map.label]);
    if (label == "0") {
      inst.label = 0;
    } else if (label == "1") {
      inst.label = 1;
    } else {
      throw ParseError(line_no, "label must be 0 or 1, got '" + label + "'");
    }
    inst.fields.resize(schema.num_fields());
    for (std::size_t f = 0; f < schema.num_fields(); ++f) {
      const std::string cell = trim(cells[map.field_column[f]]);
      if (schema.field(f).arity == Arity::kUnivalent) {
        if (cell.empty()) {
          throw ParseError(line_no, "univalent field '" + schema.field(f).name + "' is empty");
        }
        inst.fields[f].push_back(resolve(schema, f, cell));
      } else if (!cell.empty()) {
        for (const auto& token : split_string(cell, '|')) {
          const std::string t = trim(token);
          if (t.empty()) {
            throw ParseError(line_no, "empty token in field '" + schema.field(f).name + "'");
          }
          inst.fields[f].push_back(resolve(schema, f, t));
        }
      }
    }
    data.instances.push_back(std::move(inst));
  }
  data.schema = std::move(schema);
  return data;
}

}  // namespace

Dataset parse_dataset(std::istream& in, const SchemaConfig& config) {
  return parse_rows(in, Schema(config), [](Schema& s, std::size_t f, const std::string& t) {
    return s.intern(f, t);
  });
}

Dataset parse_dataset(std::istream& in, const Schema& schema) {
  return parse_rows(in, schema, [](Schema& s, std::size_t f, const std::string& t) {
    return s.lookup(f, t);
  });
}

Dataset load_dataset(const std::string& path, const SchemaConfig& config) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset " + path);
  return parse_dataset(in, config);
}

Dataset load_dataset(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset " + path);
  return parse_dataset(in, schema);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  const Schema& schema = data.schema;
  out << schema.label_column();
  for (std::size_t f = 0; f < schema.num_fields(); ++f) out << ',' << schema.field(f).name;
  out << '\n';
  for (const auto& inst : data.instances) {
    out << inst.label;
    for (std::size_t f = 0; f < schema.num_fields(); ++f) {
      out << ',';
      for (std::size_t k = 0; k < inst.fields[f].size(); ++k) {
        if (k) out << '|';
        out << schema.feature_name(inst.fields[f][k]);
      }
    }
    out << '\n';
  }
}

void validate_instance(const Instance& inst, const Schema& schema) {
  if (inst.fields.size() != schema.num_fields()) {
    throw DimensionError("instance has " + std::to_string(inst.fields.size()) +
                         " fields, schema has " + std::to_string(schema.num_fields()));
  }
  for (std::size_t f = 0; f < inst.fields.size(); ++f) {
    if (schema.field(f).arity == Arity::kUnivalent && inst.fields[f].size() != 1) {
      throw DimensionError("univalent field '" + schema.field(f).name +
                           "' needs exactly one feature");
    }
    for (FeatureId id : inst.fields[f]) {
      if (id >= schema.vocab_size() || schema.field_of(id) != f) {
        throw LookupError("feature id " + std::to_string(id) + " is not in field '" +
                          schema.field(f).name + "'");
      }
    }
  }
}

namespace {

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

Splits split(const Dataset& data, SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0) {
    throw SplitError("split ratios must be non-negative");
  }
  if (std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
    throw SplitError("split ratios must sum to 1");
  }
  const std::size_t n = data.size();
  const int nonzero = (ratios.train > 0) + (ratios.valid > 0) + (ratios.test > 0);
  if (nonzero == 3 && n < 3) {
    throw SplitError("cannot split " + std::to_string(n) + " instances three ways");
  }
  const auto n_valid = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.valid));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.test));
  const std::size_t n_train = n - n_valid - n_test;

  const auto order = permutation(n, seed);
  Splits out{{data.schema, {}}, {data.schema, {}}, {data.schema, {}}};
  out.train.instances.reserve(n_train);
  for (std::size_t k = 0; k < n; ++k) {
    const Instance& inst = data.instances[order[k]];
    if (k < n_train) {
      out.train.instances.push_back(inst);
    } else if (k < n_train + n_valid) {
      out.valid.instances.push_back(inst);
    } else {
      out.test.instances.push_back(inst);
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              bool shuffle, std::uint64_t seed) {
  if (batch_size == 0) throw DimensionError("batch_size must be at least 1");
  std::vector<std::size_t> order;
  if (shuffle) {
    order = permutation(n, seed);
  } else {
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<std::vector<std::size_t>> batches(const Dataset& data, std::size_t batch_size,
                                              bool shuffle, std::uint64_t seed) {
  return batches(data.size(), batch_size, shuffle, seed);
}

SyntheticSpec parse_synthetic_spec(std::istream& in) {
  const KeyValues kv = parse_key_values(in);
  SyntheticSpec spec;
  std::map<std::size_t, InteractionTerm> terms;
  std::map<std::size_t, bool> has_fields;
  for (const auto& [key, value] : kv) {
    if (key == "fields") {
      spec.fields = parse_uint(key, value);
    } else if (key == "vocab_per_field") {
      spec.vocab_per_field = parse_uint(key, value);
    } else if (key == "latent_dim") {
      spec.latent_dim = parse_uint(key, value);
    } else if (key == "bias") {
      spec.bias = parse_double(key, value);
    } else if (key == "noise_std") {
      spec.noise_std = parse_double(key, value);
    } else if (key == "n_instances") {
      spec.n_instances = parse_uint(key, value);
    } else if (key == "seed") {
      spec.seed = parse_uint(key, value);
    } else {
      const auto parts = split_string(key, '.');
      if (parts.size() != 3 || parts[0] != "term") {
        throw ConfigError("unknown synthetic spec key '" + key + "'");
      }
      const auto n = static_cast<std::size_t>(parse_uint(key, parts[1]));
      if (parts[2] == "fields") {
        terms[n].fields = parse_size_list(key, value);
        has_fields[n] = true;
      } else if (parts[2] == "weight") {
        terms[n].weight = parse_double(key, value);
      } else {
        throw ConfigError("unknown synthetic spec key '" + key + "'");
      }
    }
  }
  for (auto& [n, term] : terms) {
    if (!has_fields[n]) throw ConfigError("term." + std::to_string(n) + " has no fields");
    spec.terms.push_back(term);
  }
  if (spec.fields < 2) throw ConfigError("synthetic spec needs at least 2 fields");
  if (spec.vocab_per_field < 1) throw ConfigError("vocab_per_field must be positive");
  if (spec.latent_dim < 1) throw ConfigError("latent_dim must be positive");
  if (spec.noise_std < 0) throw ConfigError("noise_std must be non-negative");
  for (const auto& term : spec.terms) {
    if (term.fields.size() < 2 || term.fields.size() > 3) {
      throw ConfigError("interaction terms must be 2-way or 3-way");
    }
    for (std::size_t f : term.fields) {
      if (f >= spec.fields) throw ConfigError("term references field " + std::to_string(f));
    }
  }
  return spec;
}

void write_synthetic_spec(std::ostream& out, const SyntheticSpec& spec) {
  std::ostringstream s;
  s.precision(17);
  s << "fields = " << spec.fields << '\n'
    << "vocab_per_field = " << spec.vocab_per_field << '\n'
    << "latent_dim = " << spec.latent_dim << '\n'
    << "bias = " << spec.bias << '\n'
    << "noise_std = " << spec.noise_std << '\n'
    << "n_instances = " << spec.n_instances << '\n'
    << "seed = " << spec.seed << '\n';
  for (std::size_t k = 0; k < spec.terms.size(); ++k) {
    s << "term." << k << ".fields = ";
    for (std::size_t i = 0; i < spec.terms[k].fields.size(); ++i) {
      if (i) s << ',';
      s << spec.terms[k].fields[i];
    }
    s << "\nterm." << k << ".weight = " << spec.terms[k].weight << '\n';
  }
  out << s.str();
}

double synthetic_clean_score(const SyntheticSpec& spec,
                             const std::vector<std::vector<Vec>>& latents,
                             const std::vector<std::size_t>& values) {
  double score = spec.bias;
  for (const auto& term : spec.terms) {
    double sum = 0.0;
    for (std::size_t t = 0; t < spec.latent_dim; ++t) {
      double prod = 1.0;
      for (std::size_t f : term.fields) prod *= latents[f][values[f]][t];
      sum += prod;
    }
    score += term.weight * sum;
  }
  return score;
}

SyntheticData synthesize(const SyntheticSpec& spec) {
  SchemaConfig config;
  for (std::size_t f = 0; f < spec.fields; ++f) {
    config.fields.push_back({"f" + std::to_string(f), Arity::kUnivalent});
  }
  SyntheticData out;
  out.dataset.schema = Schema(config);
  Schema& schema = out.dataset.schema;
  std::vector<std::vector<FeatureId>> ids(spec.fields);
  for (std::size_t f = 0; f < spec.fields; ++f) {
    for (std::size_t v = 0; v < spec.vocab_per_field; ++v) {
      ids[f].push_back(schema.intern(f, "v" + std::to_string(v)));
    }
  }

  Rng rng(spec.seed);
  out.latents.assign(spec.fields, std::vector<Vec>(spec.vocab_per_field, Vec(spec.latent_dim)));
  for (auto& field : out.latents) {
    for (auto& latent : field) rng.fill_normal(latent, 1.0);
    for (std::size_t t = 0; t < spec.latent_dim; ++t) {
      double mean = 0.0;
      for (const auto& latent : field) mean += latent[t];
      mean /= static_cast<double>(field.size());
      for (auto& latent : field) latent[t] -= mean;
    }
  }

  out.dataset.instances.reserve(spec.n_instances);
  for (std::size_t n = 0; n < spec.n_instances; ++n) {
    std::vector<std::size_t> values(spec.fields);
    for (auto& v : values) v = static_cast<std::size_t>(rng.uniform_int(spec.vocab_per_field));
    const double noise = rng.normal();
    const double u = rng.uniform();
    const double score =
        synthetic_clean_score(spec, out.latents, values) + spec.noise_std * noise;
    const double p = sigmoid(score);
    Instance inst;
    inst.label = u < p ? 1 : 0;
    inst.fields.resize(spec.fields);
    for (std::size_t f = 0; f < spec.fields; ++f) inst.fields[f].push_back(ids[f][values[f]]);
    out.dataset.instances.push_back(std::move(inst));
    out.values.push_back(std::move(values));
    out.scores.push_back(score);
    out.probabilities.push_back(p);
  }
  return out;
}

}  // namespace xdfm
