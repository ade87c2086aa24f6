#include "xdfm/cli.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "xdfm/data.h"
#include "xdfm/error.h"
#include "xdfm/metrics.h"

namespace xdfm::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = {
      "data.train",         "data.valid",         "data.test",        "data.path",
      "data.schema",        "model.preset",       "model.parts",      "model.embedding_dim",
      "model.dnn_layers",   "model.dnn_activation", "model.cin_layers", "model.cin_activation",
      "model.cin_rank",     "model.cross_depth",  "model.fm_weight",  "model.init_std",
      "model.checkpoint",   "train.lr",           "train.batch_size", "train.epochs",
      "train.lambda",       "train.patience",     "train.seed",       "train.bench",
      "output.dir"};
  return keys;
}

const std::vector<std::string>& grid_keys() {
  static const std::vector<std::string> keys = {
      "grid.cin_depth", "grid.cin_width", "grid.dnn_depth", "grid.dnn_width",
      "grid.activation", "grid.lr",       "grid.lambda"};
  return keys;
}

namespace {

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value.empty()) return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + value + "'");
}

void apply(RunConfig& cfg, const std::string& key, const std::string& value) {
  ModelSpec& spec = cfg.spec;
  TrainConfig& train = cfg.train;
  if (key == "data.train") cfg.train_path = value;
  else if (key == "data.valid") cfg.valid_path = value;
  else if (key == "data.test") cfg.test_path = value;
  else if (key == "data.path") cfg.data_path = value;
  else if (key == "data.schema") cfg.schema_path = value;
  else if (key == "model.checkpoint") cfg.checkpoint_path = value;
  else if (key == "model.preset") {
    // already applied
  } else if (key == "model.parts") spec.parts = parse_parts(value);
  else if (key == "model.embedding_dim") spec.embedding_dim = parse_uint(key, value);
  else if (key == "model.dnn_layers") spec.dnn.widths = parse_size_list(key, value);
  else if (key == "model.dnn_activation") spec.dnn.activation = parse_activation(value);
  else if (key == "model.cin_layers") spec.cin.widths = parse_size_list(key, value);
  else if (key == "model.cin_activation") spec.cin.activation = parse_activation(value);
  else if (key == "model.cin_rank") spec.cin.rank = parse_uint(key, value);
  else if (key == "model.cross_depth") spec.cross_depth = parse_uint(key, value);
  else if (key == "model.fm_weight") {
    if (value == "learnable") spec.fm_weight_learnable = true;
    else if (value == "fixed") spec.fm_weight_learnable = false;
    else throw ConfigError(key + ": expected learnable or fixed, got '" + value + "'");
  } else if (key == "model.init_std") spec.init_std = parse_double(key, value);
  else if (key == "train.lr") train.lr = parse_double(key, value);
  else if (key == "train.batch_size") train.batch_size = parse_uint(key, value);
  else if (key == "train.epochs") train.max_epochs = parse_uint(key, value);
  else if (key == "train.lambda") train.lambda = parse_double(key, value);
  else if (key == "train.patience") train.patience = parse_uint(key, value);
  else if (key == "train.seed") train.seed = parse_uint(key, value);
  else if (key == "train.bench") train.bench = parse_bool(key, value);
  else if (key == "output.dir") cfg.output_dir = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& key, const std::string& value, F parse_one) {
  std::vector<T> out;
  for (const auto& item : split_string(value, ',')) {
    const std::string t = trim(item);
    if (t.empty()) throw ConfigError(key + ": empty list entry");
    out.push_back(parse_one(t));
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void require_file(const std::string& key, const std::string& path) {
  if (!fs::is_regular_file(path)) throw ConfigError(key + ": no such file: " + path);
}

struct LoadedData {
  Dataset train;
  Dataset valid;
  Dataset test;
};

LoadedData load_training_data(const RunConfig& cfg) {
  if (cfg.schema_path.empty()) throw ConfigError("data.schema is required");
  require_file("data.schema", cfg.schema_path);
  const SchemaConfig schema_cfg = load_schema_config(cfg.schema_path);
  LoadedData d;
  if (!cfg.train_path.empty()) {
    require_file("data.train", cfg.train_path);
    if (!cfg.valid_path.empty()) require_file("data.valid", cfg.valid_path);
    if (!cfg.test_path.empty()) require_file("data.test", cfg.test_path);
    d.train = load_dataset(cfg.train_path, schema_cfg);
    if (!cfg.valid_path.empty()) d.valid = load_dataset(cfg.valid_path, d.train.schema);
    if (!cfg.test_path.empty()) d.test = load_dataset(cfg.test_path, d.train.schema);
  } else if (!cfg.data_path.empty()) {
    require_file("data.path", cfg.data_path);
    Splits s = split(load_dataset(cfg.data_path, schema_cfg), SplitRatios{}, cfg.train.seed);
    d.train = std::move(s.train);
    d.valid = std::move(s.valid);
    d.test = std::move(s.test);
  } else {
    throw ConfigError("one of data.train or data.path is required");
  }
  if (d.train.empty()) throw ConfigError("training set is empty");
  d.valid.schema = d.train.schema;
  d.test.schema = d.train.schema;
  return d;
}

TrainConfig capped(TrainConfig tc, std::size_t n) {
  tc.batch_size = std::max<std::size_t>(1, std::min(tc.batch_size, n));
  return tc;
}

ordered_json report_json(const EvalReport& r, const std::string& split_name) {
  ordered_json js;
  js["split"] = split_name;
  js["auc"] = r.auc;
  js["logloss"] = r.logloss;
  js["n"] = r.n;
  js["positives"] = r.positives;
  return js;
}

// Exceptions are mapped to exit codes in one place.
template <typename F>
int guarded(std::ostream& err, F body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SplitError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("write failed: " + path.string());
}

}  // namespace

RunConfig run_config_from(const KeyValues& kv) {
  RunConfig cfg;
  if (auto it = kv.find("model.preset"); it != kv.end()) cfg.spec = make_preset(it->second);
  for (const auto& [key, value] : kv) {
    if (key.starts_with("grid.")) continue;
    apply(cfg, key, value);
  }
  return cfg;
}

GridSpec grid_spec_from(const KeyValues& kv) {
  GridSpec g;
  const auto sizes = [](const std::string& key, const std::string& value) {
    return parse_list<std::size_t>(key, value, [&](const std::string& t) {
      return static_cast<std::size_t>(parse_uint(key, t));
    });
  };
  const auto doubles = [](const std::string& key, const std::string& value) {
    return parse_list<double>(key, value, [&](const std::string& t) { return parse_double(key, t); });
  };
  for (const auto& [key, value] : kv) {
    if (!key.starts_with("grid.")) continue;
    if (key == "grid.cin_depth") g.cin_depth = sizes(key, value);
    else if (key == "grid.cin_width") g.cin_width = sizes(key, value);
    else if (key == "grid.dnn_depth") g.dnn_depth = sizes(key, value);
    else if (key == "grid.dnn_width") g.dnn_width = sizes(key, value);
    else if (key == "grid.lr") g.lr = doubles(key, value);
    else if (key == "grid.lambda") g.lambda = doubles(key, value);
    else if (key == "grid.activation") {
      g.activation = parse_list<Activation>(key, value, [](const std::string& t) {
        return parse_activation(t);
      });
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  return g;
}

std::vector<GridPoint> expand_grid(const GridSpec& grid, const RunConfig& base) {
  const auto or_base = [](auto list, auto fallback) {
    if (list.empty()) list.push_back(fallback);
    return list;
  };
  const auto& cw = base.spec.cin.widths;
  const auto& dw = base.spec.dnn.widths;
  const auto cin_depth = or_base(grid.cin_depth, cw.size());
  const auto cin_width = or_base(grid.cin_width, cw.empty() ? std::size_t{0} : cw.front());
  const auto dnn_depth = or_base(grid.dnn_depth, dw.size());
  const auto dnn_width = or_base(grid.dnn_width, dw.empty() ? std::size_t{0} : dw.front());
  const auto activation = or_base(grid.activation, base.spec.cin.activation);
  const auto lr = or_base(grid.lr, base.train.lr);
  const auto lambda = or_base(grid.lambda, base.train.lambda);

  std::vector<GridPoint> points;
  for (auto a : cin_depth)
    for (auto b : cin_width)
      for (auto c : dnn_depth)
        for (auto d : dnn_width)
          for (auto e : activation)
            for (auto f : lr)
              for (auto g : lambda) {
                points.push_back({points.size(), a, b, c, d, e, f, g});
              }
  return points;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    validate_spec(cfg.spec);
    const LoadedData data = load_training_data(cfg);
    const TrainConfig tc = capped(cfg.train, data.train.size());
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);

    std::ofstream history(dir / "history.jsonl", std::ios::binary);
    if (!history) throw Error("cannot write " + (dir / "history.jsonl").string());
    const TrainResult result = train(cfg.spec, data.train, data.valid, tc, [&](const EpochRecord& r) {
      history << to_json(r) << "\n";
      history.flush();
      out << "epoch " << r.epoch << " train_loss " << r.train_loss << " valid_auc " << r.valid_auc;
      if (r.cin_seconds) out << " cin_s " << *r.cin_seconds;
      if (r.dnn_seconds) out << " dnn_s " << *r.dnn_seconds;
      out << "\n";
    });

    save_checkpoint((dir / "model.ckpt").string(), result.params, cfg.spec, &data.train.schema,
                    cfg.train.seed);

    const Dataset* final_set = &data.test;
    std::string name = "test";
    if (final_set->empty()) {
      final_set = &data.valid;
      name = "valid";
    }
    if (final_set->empty()) {
      final_set = &data.train;
      name = "train";
    }
    const EvalReport report = evaluate(result.params, cfg.spec, *final_set);
    ordered_json js = report_json(report, name);
    js["best_epoch"] = result.history.best_epoch;
    write_text(dir / "eval.json", js.dump(2) + "\n");
    out << js.dump() << "\n";
    return kExitOk;
  });
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (cfg.checkpoint_path.empty()) throw ConfigError("model.checkpoint is required");
    require_file("model.checkpoint", cfg.checkpoint_path);
    const Checkpoint ckpt = load_checkpoint(cfg.checkpoint_path);
    if (!ckpt.schema) throw ConfigError("checkpoint carries no schema");
    std::string key = "data.test";
    std::string path = cfg.test_path;
    if (path.empty()) {
      key = "data.path";
      path = cfg.data_path;
    }
    if (path.empty()) throw ConfigError("one of data.test or data.path is required");
    require_file(key, path);
    const Dataset data = load_dataset(path, *ckpt.schema);
    const EvalReport report = evaluate(ckpt.params, ckpt.spec, data);
    out << report_json(report, key == "data.test" ? "test" : "data").dump() << "\n";
    return kExitOk;
  });
}

int cmd_gridsearch(const RunConfig& cfg, const GridSpec& grid, std::ostream& out,
                   std::ostream& err) {
  return guarded(err, [&] {
    const LoadedData data = load_training_data(cfg);
    const std::vector<GridPoint> points = expand_grid(grid, cfg);
    out << "grid combinations: " << points.size() << "\n";

    struct Row {
      bool ok = false;
      std::string error;
      EvalReport valid;
      EvalReport test;
      bool has_test = false;
    };
    std::vector<Row> rows(points.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
      for (std::size_t i = next++; i < points.size(); i = next++) {
        const GridPoint& p = points[i];
        Row& row = rows[i];
        try {
          ModelSpec spec = cfg.spec;
          spec.cin.widths.assign(p.cin_depth, p.cin_width);
          spec.cin.activation = p.activation;
          spec.dnn.widths.assign(p.dnn_depth, p.dnn_width);
          validate_spec(spec);
          TrainConfig tc = capped(cfg.train, data.train.size());
          tc.lr = p.lr;
          tc.lambda = p.lambda;
          tc.seed = cfg.train.seed + p.index;
          tc.bench = false;
          const TrainResult r = train(spec, data.train, data.valid, tc);
          row.valid = evaluate(r.params, spec, data.valid.empty() ? data.train : data.valid);
          if (!data.test.empty()) {
            row.test = evaluate(r.params, spec, data.test);
            row.has_test = true;
          }
          row.ok = true;
        } catch (const std::exception& e) {
          row.error = e.what();
        }
      }
    };
    const std::size_t n_threads =
        std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(),
                                                       points.size()));
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    std::vector<std::size_t> order(points.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (rows[a].ok != rows[b].ok) return rows[a].ok;
      return rows[a].ok && rows[a].valid.auc > rows[b].valid.auc;
    });

    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);
    std::ostringstream csv;
    csv << "index,cin_depth,cin_width,dnn_depth,dnn_width,activation,lr,lambda,seed,status,"
           "auc,logloss,test_auc,test_logloss\n";
    std::size_t failures = 0;
    for (std::size_t i : order) {
      const GridPoint& p = points[i];
      const Row& r = rows[i];
      csv << p.index << ',' << p.cin_depth << ',' << p.cin_width << ',' << p.dnn_depth << ','
          << p.dnn_width << ',' << to_string(p.activation) << ',' << fmt(p.lr) << ','
          << fmt(p.lambda) << ',' << cfg.train.seed + p.index << ',';
      if (r.ok) {
        csv << "ok," << fmt(r.valid.auc) << ',' << fmt(r.valid.logloss) << ',';
        if (r.has_test) csv << fmt(r.test.auc) << ',' << fmt(r.test.logloss);
        else csv << ',';
      } else {
        ++failures;
        csv << "failed,,,,";
        err << "combination " << p.index << " failed: " << r.error << "\n";
      }
      csv << "\n";
    }
    write_text(dir / "grid_results.csv", csv.str());
    out << "completed " << points.size() - failures << ", failed " << failures << "\n";
    return failures == points.size() && !points.empty() ? kExitRuntime : kExitOk;
  });
}

const std::vector<std::string>& default_checks() {
  static const std::vector<std::string> checks = {"collinearity", "polynomial", "params",
                                                  "fm_reduction", "gradients"};
  return checks;
}

int cmd_verify(const std::vector<std::string>& selection, std::ostream& out, std::ostream& err,
               const oracle::GradientHook& hook) {
  return guarded(err, [&] {
    for (const auto& name : selection) {
      if (name != "low_rank" &&
          std::find(default_checks().begin(), default_checks().end(), name) ==
              default_checks().end()) {
        throw ConfigError("unknown check '" + name + "'");
      }
    }
    bool all = true;
    for (const auto& name : selection) {
      oracle::CheckReport report;
      if (name == "collinearity") report = oracle::collinearity_suite();
      else if (name == "polynomial") report = oracle::polynomial_suite();
      else if (name == "params") report = oracle::params_suite();
      else if (name == "fm_reduction") report = oracle::fm_reduction_suite();
      else if (name == "gradients") report = oracle::gradient_suite(19, 20, hook);
      else report = oracle::low_rank_suite();
      out << report.to_json() << "\n";
      all = all && report.passed;
    }
    return all ? kExitOk : kExitCheckFailed;
  });
}

int cmd_synthesize(const std::string& spec_path, const std::string& out_path, std::ostream& out,
                   std::ostream& err) {
  return guarded(err, [&] {
    require_file("spec", spec_path);
    std::ifstream in(spec_path);
    const SyntheticSpec spec = parse_synthetic_spec(in);
    const SyntheticData data = synthesize(spec);

    const fs::path path(out_path);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ostringstream csv;
    write_dataset(csv, data.dataset);
    write_text(path, csv.str());

    std::ostringstream schema;
    const SchemaConfig& sc = data.dataset.schema.config();
    for (std::size_t f = 0; f < sc.fields.size(); ++f) {
      schema << "field." << f << ".name = " << sc.fields[f].name << "\n";
      schema << "field." << f << ".arity = " << to_string(sc.fields[f].arity) << "\n";
    }
    schema << "label_column = " << sc.label_column << "\n";
    write_text(out_path + ".schema", schema.str());

    std::ostringstream spec_text;
    write_synthetic_spec(spec_text, spec);
    ordered_json manifest;
    manifest["spec"] = spec_text.str();
    manifest["latents"] = data.latents;
    manifest["values"] = data.values;
    manifest["scores"] = data.scores;
    manifest["probabilities"] = data.probabilities;
    write_text(out_path + ".manifest.json", manifest.dump() + "\n");
    out << "wrote " << data.dataset.size() << " instances to " << out_path << "\n";
    return kExitOk;
  });
}

}  // namespace xdfm::cli
