#include "xdfm/model.h"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "xdfm/error.h"
#include "xdfm/kv.h"

namespace xdfm {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

constexpr std::pair<Part, const char*> kPartNames[] = {
    {Part::kLinear, "linear"}, {Part::kFm, "fm"},       {Part::kDnn, "dnn"},
    {Part::kCin, "cin"},       {Part::kCross, "cross"},
};

unsigned bits(std::initializer_list<Part> parts) {
  unsigned out = 0;
  for (Part p : parts) out |= static_cast<unsigned>(p);
  return out;
}

}  // namespace

ModelSpec make_preset(const std::string& name) {
  ModelSpec spec;
  const std::string key = lower(name);
  if (key == "lr") {
    spec.parts = bits({Part::kLinear});
    spec.preset = "LR";
  } else if (key == "fm") {
    spec.parts = bits({Part::kLinear, Part::kFm});
    spec.preset = "FM";
  } else if (key == "dnn") {
    spec.parts = bits({Part::kDnn});
    spec.preset = "DNN";
  } else if (key == "cin") {
    spec.parts = bits({Part::kCin});
    spec.preset = "CIN";
  } else if (key == "crossnet") {
    spec.parts = bits({Part::kCross});
    spec.preset = "CrossNet";
  } else if (key == "dcn") {
    spec.parts = bits({Part::kCross, Part::kDnn});
    spec.preset = "DCN";
  } else if (key == "deepfm") {
    spec.parts = bits({Part::kLinear, Part::kFm, Part::kDnn});
    spec.preset = "DeepFM";
  } else if (key == "xdeepfm") {
    spec.parts = bits({Part::kLinear, Part::kCin, Part::kDnn});
    spec.preset = "xDeepFM";
  } else {
    throw ConfigError("unknown model preset '" + name + "'");
  }
  return spec;
}

std::vector<std::string> preset_names() {
  return {"LR", "FM", "DNN", "CIN", "CrossNet", "DCN", "DeepFM", "xDeepFM"};
}

std::string parts_to_string(unsigned parts) {
  std::string out;
  for (const auto& [part, name] : kPartNames) {
    if (parts & static_cast<unsigned>(part)) {
      if (!out.empty()) out += ',';
      out += name;
    }
  }
  return out;
}

unsigned parse_parts(const std::string& text) {
  unsigned out = 0;
  for (const auto& token : split_string(text, ',')) {
    const std::string t = lower(trim(token));
    if (t.empty()) continue;
    bool found = false;
    for (const auto& [part, name] : kPartNames) {
      if (t == name) {
        out |= static_cast<unsigned>(part);
        found = true;
      }
    }
    if (!found) throw ConfigError("unknown model part '" + t + "'");
  }
  return out;
}

void validate_spec(const ModelSpec& spec) {
  if (spec.parts == 0) throw ConfigError("model needs at least one enabled part");
  if (spec.uses_embeddings() && spec.embedding_dim == 0) {
    throw ConfigError("embedding_dim must be positive");
  }
  if (spec.has(Part::kDnn) && spec.dnn.widths.empty()) {
    throw ConfigError("DNN part needs at least one layer");
  }
  if (spec.has(Part::kCin) && spec.cin.widths.empty()) {
    throw ConfigError("CIN part needs at least one layer");
  }
  if (spec.has(Part::kCross) && spec.cross_depth == 0) {
    throw ConfigError("CrossNet part needs at least one layer");
  }
  if (!(spec.init_std >= 0.0)) throw ConfigError("init_std must be non-negative");
}

ModelParams make_params(const ModelSpec& spec, std::size_t fields, std::size_t vocab_size) {
  validate_spec(spec);
  ModelParams p;
  p.fields = fields;
  const std::size_t width = fields * spec.embedding_dim;
  if (spec.has(Part::kLinear)) p.linear.weights.assign(vocab_size, 0.0);
  if (spec.uses_embeddings()) p.embedding = EmbeddingTable(vocab_size, spec.embedding_dim);
  if (spec.has(Part::kDnn)) {
    p.dnn = make_dnn(width, spec.dnn);
    p.dnn_out.assign(p.dnn.output_width(), 0.0);
  }
  if (spec.has(Part::kCin)) p.cin = make_cin(fields, spec.cin);
  if (spec.has(Part::kCross)) {
    p.cross = make_crossnet(width, spec.cross_depth);
    p.cross_out.assign(width, 0.0);
  }
  return p;
}

namespace {

std::span<double> span_of(Vec& v) { return v; }
std::span<const double> span_of(const Vec& v) { return v; }
std::span<double> span_of(Mat& m) { return m.values(); }
std::span<const double> span_of(const Mat& m) { return m.values(); }
std::span<double> span_of(double& d) { return {&d, 1}; }
std::span<const double> span_of(const double& d) { return {&d, 1}; }

template <typename T, typename P>
std::vector<BasicParamGroup<T>> collect_groups(P& p, const ModelSpec& spec) {
  std::vector<BasicParamGroup<T>> g;
  auto add = [&](std::string name, auto& storage, bool regularized) {
    g.push_back({std::move(name), span_of(storage), regularized});
  };
  add("bias", p.bias, false);
  if (spec.has(Part::kLinear)) add("linear", p.linear.weights, true);
  if (spec.uses_embeddings()) add("embedding", p.embedding.table, false);
  if (spec.has(Part::kFm) && spec.fm_weight_learnable) add("fm.weight", p.fm_weight, true);
  if (spec.has(Part::kDnn)) {
    for (std::size_t k = 0; k < p.dnn.layers.size(); ++k) {
      add("dnn." + std::to_string(k) + ".weight", p.dnn.layers[k].weight, true);
      add("dnn." + std::to_string(k) + ".bias", p.dnn.layers[k].bias, false);
    }
    add("dnn.out", p.dnn_out, true);
  }
  if (spec.has(Part::kCin)) {
    for (std::size_t k = 0; k < p.cin.layers.size(); ++k) {
      if (p.cin.low_rank()) {
        add("cin." + std::to_string(k) + ".u", p.cin.layers[k].u, true);
        add("cin." + std::to_string(k) + ".v", p.cin.layers[k].v, true);
      } else {
        add("cin." + std::to_string(k) + ".filters", p.cin.layers[k].filters, true);
      }
    }
    add("cin.out", p.cin.output, true);
  }
  if (spec.has(Part::kCross)) {
    for (std::size_t k = 0; k < p.cross.layers.size(); ++k) {
      add("cross." + std::to_string(k) + ".weight", p.cross.layers[k].weight, true);
      add("cross." + std::to_string(k) + ".bias", p.cross.layers[k].bias, false);
    }
    add("cross.out", p.cross_out, true);
  }
  return g;
}

}  // namespace

std::vector<ParamGroup> param_groups(ModelParams& params, const ModelSpec& spec) {
  return collect_groups<double>(params, spec);
}

std::vector<ConstParamGroup> param_groups(const ModelParams& params, const ModelSpec& spec) {
  return collect_groups<const double>(params, spec);
}

void init_params(ModelParams& params, const ModelSpec& spec, Rng& rng) {
  for (auto& group : param_groups(params, spec)) {
    const bool is_bias = group.name == "bias" ||
                         (group.name.size() > 5 && group.name.ends_with(".bias"));
    if (is_bias) continue;
    if (group.name == "fm.weight") {
      group.values[0] = 1.0;
      continue;
    }
    rng.fill_normal(group.values, spec.init_std);
  }
}

ModelParams init_params(const ModelSpec& spec, std::size_t fields, std::size_t vocab_size,
                        std::uint64_t seed) {
  ModelParams p = make_params(spec, fields, vocab_size);
  Rng rng(seed);
  init_params(p, spec, rng);
  return p;
}

std::size_t num_parameters(const ModelParams& params, const ModelSpec& spec) {
  std::size_t n = 0;
  for (const auto& g : param_groups(params, spec)) n += g.values.size();
  return n;
}

Vec flatten(const ModelParams& params, const ModelSpec& spec) {
  Vec out;
  out.reserve(num_parameters(params, spec));
  for (const auto& g : param_groups(params, spec)) out.insert(out.end(), g.values.begin(), g.values.end());
  return out;
}

void unflatten(std::span<const double> flat, ModelParams& params, const ModelSpec& spec) {
  if (flat.size() != num_parameters(params, spec)) {
    throw DimensionError("unflatten: expected " + std::to_string(num_parameters(params, spec)) +
                         " values, got " + std::to_string(flat.size()));
  }
  std::size_t pos = 0;
  for (auto& g : param_groups(params, spec)) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), g.values.size(), g.values.begin());
    pos += g.values.size();
  }
}

void zero_fill(ModelParams& params, const ModelSpec& spec) {
  for (auto& g : param_groups(params, spec)) std::fill(g.values.begin(), g.values.end(), 0.0);
}

ModelParams zeros_like(const ModelParams& params, const ModelSpec& spec) {
  ModelParams z = params;
  for (auto& g : param_groups(z, spec)) std::fill(g.values.begin(), g.values.end(), 0.0);
  z.fm_weight = 0.0;
  return z;
}

double logit(const Instance& instance, const ModelParams& params, const ModelSpec& spec,
             ForwardCache* cache) {
  if (instance.fields.size() != params.fields) {
    throw DimensionError("instance has " + std::to_string(instance.fields.size()) +
                         " fields, model expects " + std::to_string(params.fields));
  }
  double z = params.bias;
  if (spec.has(Part::kLinear)) z += linear_forward(instance, params.linear);
  if (spec.uses_embeddings()) {
    Mat x0 = embed_forward(instance, params.embedding);
    if (spec.has(Part::kFm)) {
      const double fm = fm_pairwise_fast(x0);
      z += params.fm_weight * fm;
      if (cache) cache->fm = fm;
    }
    if (spec.has(Part::kDnn)) {
      Vec h = dnn_forward(x0.values(), params.dnn, cache ? &cache->dnn : nullptr);
      z += dot(params.dnn_out, h);
      if (cache) cache->dnn_hidden = std::move(h);
    }
    if (spec.has(Part::kCin)) {
      CinOutput out = cin_forward(x0, params.cin, cache ? &cache->cin : nullptr);
      z += dot(params.cin.output, out.pooled);
      if (cache) cache->pooled = std::move(out.pooled);
    }
    if (spec.has(Part::kCross)) {
      Vec c = crossnet_forward(x0.values(), params.cross, cache ? &cache->cross : nullptr);
      z += dot(params.cross_out, c);
      if (cache) cache->cross_hidden = std::move(c);
    }
    if (cache) cache->x0 = std::move(x0);
  }
  if (cache) {
    cache->logit = z;
    cache->valid = true;
  }
  return z;
}

double forward(const Instance& instance, const ModelParams& params, const ModelSpec& spec) {
  return sigmoid(logit(instance, params, spec));
}

void backward(const Instance& instance, const ModelParams& params, const ModelSpec& spec,
              const ForwardCache& cache, double upstream, ModelParams& grads) {
  if (!cache.valid) throw StateError("backward called without a forward cache");
  grads.bias += upstream;
  if (spec.has(Part::kLinear)) linear_backward(instance, upstream, grads.linear);
  if (!spec.uses_embeddings()) return;

  Mat gx0(cache.x0.rows(), cache.x0.cols());
  if (spec.has(Part::kFm)) {
    if (spec.fm_weight_learnable) grads.fm_weight += upstream * cache.fm;
    fm_pairwise_backward(cache.x0, upstream * params.fm_weight, gx0);
  }
  auto add_into = [&gx0](std::span<const double> g) {
    auto dst = gx0.values();
    for (std::size_t t = 0; t < g.size(); ++t) dst[t] += g[t];
  };
  if (spec.has(Part::kDnn)) {
    Vec gh(params.dnn_out.size());
    for (std::size_t r = 0; r < gh.size(); ++r) {
      grads.dnn_out[r] += upstream * cache.dnn_hidden[r];
      gh[r] = upstream * params.dnn_out[r];
    }
    add_into(dnn_backward(params.dnn, cache.dnn, gh, grads.dnn));
  }
  if (spec.has(Part::kCin)) {
    Vec gp(params.cin.output.size());
    for (std::size_t r = 0; r < gp.size(); ++r) {
      grads.cin.output[r] += upstream * cache.pooled[r];
      gp[r] = upstream * params.cin.output[r];
    }
    add_into(cin_backward(params.cin, cache.cin, gp, grads.cin).values());
  }
  if (spec.has(Part::kCross)) {
    Vec gc(params.cross_out.size());
    for (std::size_t r = 0; r < gc.size(); ++r) {
      grads.cross_out[r] += upstream * cache.cross_hidden[r];
      gc[r] = upstream * params.cross_out[r];
    }
    add_into(crossnet_backward(params.cross, cache.cross, gc, grads.cross));
  }
  embed_backward_into(instance, gx0, grads.embedding.table);
}

double clamp_probability(double p) {
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

double logloss(std::span<const double> preds, std::span<const int> labels) {
  if (preds.empty()) throw ArgumentError("logloss of an empty set");
  if (preds.size() != labels.size()) throw ArgumentError("logloss: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double p = clamp_probability(preds[i]);
    sum += labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return -sum / static_cast<double>(preds.size());
}

double l2_penalty(const ModelParams& params, const ModelSpec& spec) {
  double sum = 0.0;
  for (const auto& g : param_groups(params, spec)) {
    if (!g.regularized) continue;
    for (double v : g.values) sum += v * v;
  }
  return sum;
}

double objective(double loss, const ModelParams& params, const ModelSpec& spec, double lambda) {
  if (lambda < 0.0) throw ArgumentError("lambda must be non-negative");
  return lambda == 0.0 ? loss : loss + lambda * l2_penalty(params, spec);
}

BatchStats batch_objective(const std::vector<Instance>& instances,
                           std::span<const std::size_t> batch, const ModelParams& params,
                           const ModelSpec& spec, double reg_weight, ModelParams* grads) {
  BatchStats stats;
  if (batch.empty()) return stats;
  const double scale = 1.0 / static_cast<double>(batch.size());
  ForwardCache cache;
  double sum = 0.0;
  for (std::size_t idx : batch) {
    const Instance& inst = instances.at(idx);
    const double z = logit(inst, params, spec, grads ? &cache : nullptr);
    const double p = sigmoid(z);
    const double pc = clamp_probability(p);
    sum -= inst.label == 1 ? std::log(pc) : std::log(1.0 - pc);
    if (grads) {
      // Zero slope wherever the logit or probability clamp is active.
      const bool saturated = std::abs(z) > 35.0 || pc != p;
      const double dz = saturated ? 0.0 : (p - static_cast<double>(inst.label));
      if (dz != 0.0) backward(inst, params, spec, cache, dz * scale, *grads);
    }
  }
  stats.loss = sum * scale;
  stats.objective = stats.loss;
  if (reg_weight > 0.0) {
    stats.objective += reg_weight * l2_penalty(params, spec);
    if (grads) {
      auto pg = param_groups(params, spec);
      auto gg = param_groups(*grads, spec);
      for (std::size_t k = 0; k < pg.size(); ++k) {
        if (!pg[k].regularized) continue;
        for (std::size_t t = 0; t < pg[k].values.size(); ++t) {
          gg[k].values[t] += 2.0 * reg_weight * pg[k].values[t];
        }
      }
    }
  }
  return stats;
}

// --- checkpoint -------------------------------------------------------------

namespace {

constexpr const char* kMagic = "XFM1";
constexpr int kFormatVersion = 1;

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

void put_le(std::ostream& out, double v) {
  const auto bitsv = std::bit_cast<std::uint64_t>(v);
  char buf[8];
  for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((bitsv >> (8 * b)) & 0xff);
  out.write(buf, 8);
}

bool get_le(std::istream& in, double& v) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) return false;
  std::uint64_t bitsv = 0;
  for (int b = 0; b < 8; ++b) bitsv |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
  v = std::bit_cast<double>(bitsv);
  return true;
}

const std::string& require(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw CheckpointError("checkpoint header lacks '" + key + "'");
  return it->second;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& params, const ModelSpec& spec,
                      const Schema* schema, std::uint64_t seed) {
  out << kMagic << '\n';
  out << "format = " << kFormatVersion << '\n';
  out << "preset = " << spec.preset << '\n';
  out << "parts = " << parts_to_string(spec.parts) << '\n';
  out << "embedding_dim = " << spec.embedding_dim << '\n';
  out << "dnn.widths = " << join_sizes(spec.dnn.widths) << '\n';
  out << "dnn.activation = " << to_string(spec.dnn.activation) << '\n';
  out << "cin.widths = " << join_sizes(spec.cin.widths) << '\n';
  out << "cin.activation = " << to_string(spec.cin.activation) << '\n';
  out << "cin.rank = " << spec.cin.rank << '\n';
  out << "cross.depth = " << spec.cross_depth << '\n';
  out << "fm.learnable = " << (spec.fm_weight_learnable ? 1 : 0) << '\n';
  out << "init_std = " << format_double(spec.init_std) << '\n';
  out << "fields = " << params.fields << '\n';
  const std::size_t vocab = spec.has(Part::kLinear) ? params.linear.weights.size()
                                                    : params.embedding.vocab_size();
  out << "vocab = " << vocab << '\n';
  out << "seed = " << seed << '\n';
  if (spec.has(Part::kFm) && !spec.fm_weight_learnable) {
    out << "fm.fixed_weight = " << format_double(params.fm_weight) << '\n';
  }
  if (schema) {
    nlohmann::json js;
    js["label_column"] = schema->label_column();
    js["fields"] = nlohmann::json::array();
    for (std::size_t f = 0; f < schema->num_fields(); ++f) {
      js["fields"].push_back({schema->field(f).name, to_string(schema->field(f).arity)});
    }
    js["features"] = nlohmann::json::array();
    for (std::size_t id = schema->num_fields(); id < schema->vocab_size(); ++id) {
      js["features"].push_back(
          {schema->field_of(static_cast<FeatureId>(id)), schema->feature_name(static_cast<FeatureId>(id))});
    }
    out << "schema = " << js.dump() << '\n';
  }
  const auto groups = param_groups(params, spec);
  for (std::size_t k = 0; k < groups.size(); ++k) {
    out << "group." << k << " = " << groups[k].name << ' ' << groups[k].values.size() << '\n';
  }
  out << '\n';
  for (const auto& g : groups) {
    for (double v : g.values) put_le(out, v);
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw CheckpointError("bad checkpoint magic");
  // Values may hold arbitrary vocabulary strings, so no comment stripping.
  KeyValues kv;
  bool terminated = false;
  while (std::getline(in, line)) {
    if (line.empty()) {
      terminated = true;
      break;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw CheckpointError("malformed checkpoint header line");
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  if (!terminated) throw CheckpointError("truncated checkpoint header");

  Checkpoint ck;
  try {
    if (parse_int("format", require(kv, "format")) != kFormatVersion) {
      throw CheckpointError("unsupported checkpoint format version");
    }
    ModelSpec& spec = ck.spec;
    spec.preset = require(kv, "preset");
    spec.parts = parse_parts(require(kv, "parts"));
    spec.embedding_dim = parse_uint("embedding_dim", require(kv, "embedding_dim"));
    spec.dnn.widths = parse_size_list("dnn.widths", require(kv, "dnn.widths"));
    spec.dnn.activation = parse_activation(require(kv, "dnn.activation"));
    spec.cin.widths = parse_size_list("cin.widths", require(kv, "cin.widths"));
    spec.cin.activation = parse_activation(require(kv, "cin.activation"));
    spec.cin.rank = parse_uint("cin.rank", require(kv, "cin.rank"));
    spec.cross_depth = parse_uint("cross.depth", require(kv, "cross.depth"));
    spec.fm_weight_learnable = parse_int("fm.learnable", require(kv, "fm.learnable")) != 0;
    spec.init_std = parse_double("init_std", require(kv, "init_std"));
    const auto fields = parse_uint("fields", require(kv, "fields"));
    const auto vocab = parse_uint("vocab", require(kv, "vocab"));
    ck.seed = parse_uint("seed", require(kv, "seed"));
    ck.params = make_params(spec, fields, vocab);
    if (auto it = kv.find("fm.fixed_weight"); it != kv.end()) {
      ck.params.fm_weight = parse_double("fm.fixed_weight", it->second);
    }
    if (auto it = kv.find("schema"); it != kv.end()) {
      const auto js = nlohmann::json::parse(it->second);
      SchemaConfig config;
      config.label_column = js.at("label_column").get<std::string>();
      for (const auto& f : js.at("fields")) {
        config.fields.push_back({f.at(0).get<std::string>(), parse_arity(f.at(1).get<std::string>())});
      }
      Schema schema(config);
      for (const auto& feat : js.at("features")) {
        schema.intern(feat.at(0).get<std::size_t>(), feat.at(1).get<std::string>());
      }
      ck.schema = std::move(schema);
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("invalid checkpoint header: ") + e.what());
  }

  auto groups = param_groups(ck.params, ck.spec);
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const std::string expected =
        groups[k].name + ' ' + std::to_string(groups[k].values.size());
    auto it = kv.find("group." + std::to_string(k));
    if (it == kv.end() || it->second != expected) {
      throw CheckpointError("checkpoint group " + std::to_string(k) + " does not match '" +
                            expected + "'");
    }
  }
  if (kv.count("group." + std::to_string(groups.size()))) {
    throw CheckpointError("checkpoint declares more groups than the spec allocates");
  }
  for (auto& g : groups) {
    for (double& v : g.values) {
      if (!get_le(in, v)) throw CheckpointError("truncated checkpoint payload");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError("trailing bytes after checkpoint payload");
  }
  return ck;
}

void save_checkpoint(const std::string& path, const ModelParams& params, const ModelSpec& spec,
                     const Schema* schema, std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  write_checkpoint(out, params, spec, schema, seed);
  if (!out) throw CheckpointError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace xdfm
