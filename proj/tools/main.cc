#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xdfm/cli.h"
#include "xdfm/error.h"
#include "xdfm/kv.h"

namespace {

using xdfm::KeyValues;

// Each config key doubles as a --key flag; flags win over the file.
struct Settings {
  std::string config_path;
  std::map<std::string, std::string> flags;

  void attach(CLI::App* app, const std::vector<std::string>& keys) {
    app->add_option("--config", config_path, "key = value config file");
    for (const auto& key : keys) {
      app->add_option("--" + key, flags[key], key);
    }
  }

  KeyValues resolve(CLI::App* app) const {
    KeyValues kv;
    if (!config_path.empty()) kv = xdfm::load_key_values(config_path);
    for (const auto& [key, value] : flags) {
      if (app->count("--" + key) > 0) kv[key] = value;
    }
    return kv;
  }
};

}  // namespace

int main(int argc, char** argv) {
  namespace cli = xdfm::cli;
  CLI::App app{"xdfm: CIN / xDeepFM training and verification"};
  app.require_subcommand(1);

  std::vector<std::string> model_keys = cli::run_config_keys();
  std::vector<std::string> grid_keys = model_keys;
  grid_keys.insert(grid_keys.end(), cli::grid_keys().begin(), cli::grid_keys().end());

  Settings train_s, eval_s, grid_s;
  auto* train = app.add_subcommand("train", "train a model and write model.ckpt, history.jsonl, eval.json");
  train_s.attach(train, model_keys);
  bool bench = false;
  train->add_flag("--bench", bench, "time CIN and DNN parts per epoch");
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a dataset");
  eval_s.attach(evaluate, model_keys);
  auto* grid = app.add_subcommand("gridsearch", "train every grid combination, rank by valid AUC");
  grid_s.attach(grid, grid_keys);

  auto* verify = app.add_subcommand("verify", "run oracle checks");
  std::vector<std::string> checks;
  std::string select;
  verify->add_option("checks", checks, "checks to run (default: all five)");
  verify->add_option("--select", select, "comma-separated checks; empty runs none");

  auto* synth = app.add_subcommand("synthesize", "generate a synthetic interaction dataset");
  std::string spec_path, out_path;
  synth->add_option("spec", spec_path, "synthetic spec file")->required();
  synth->add_option("out", out_path, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitUsage;
  }

  try {
    if (*train) {
      auto cfg = cli::run_config_from(train_s.resolve(train));
      if (bench) cfg.train.bench = true;
      return cli::cmd_train(cfg, std::cout, std::cerr);
    }
    if (*evaluate) {
      return cli::cmd_evaluate(cli::run_config_from(eval_s.resolve(evaluate)), std::cout,
                               std::cerr);
    }
    if (*grid) {
      const KeyValues kv = grid_s.resolve(grid);
      return cli::cmd_gridsearch(cli::run_config_from(kv), cli::grid_spec_from(kv), std::cout,
                                 std::cerr);
    }
    if (*verify) {
      std::vector<std::string> selection = checks;
      if (verify->count("--select") > 0) {
        selection.clear();
        for (const auto& s : xdfm::split_string(select, ',')) {
          if (!xdfm::trim(s).empty()) selection.push_back(xdfm::trim(s));
        }
      } else if (selection.empty()) {
        selection = cli::default_checks();
      }
      return cli::cmd_verify(selection, std::cout, std::cerr);
    }
    if (*synth) return cli::cmd_synthesize(spec_path, out_path, std::cout, std::cerr);
  } catch (const xdfm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitUsage;
  }
  return cli::kExitUsage;
}
