// Runs every acceptance criterion and prints one PASS/FAIL line each.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "xdfm/cli.h"
#include "xdfm/metrics.h"
#include "xdfm/model.h"
#include "xdfm/optim.h"
#include "xdfm/oracle.h"

using namespace xdfm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(3) << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome from_report(const oracle::CheckReport& r, double seconds, double budget) {
  Outcome o;
  o.passed = r.passed && seconds < budget;
  o.detail = "worst=" + num(r.worst_deviation) + " time=" + num(seconds) + "s (budget " +
             num(budget) + "s)";
  return o;
}

double pairwise_auc(const Vec& s, const std::vector<int>& y) {
  double wins = 0;
  double pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

Outcome auc_oracle() {
  Rng rng(101);
  double worst = 0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = 2 + rng.uniform_int(499);
    Vec s(n);
    std::vector<int> y(n);
    // A coarse grid for a random share of the scores forces ties.
    const double grid = 1.0 + static_cast<double>(rng.uniform_int(20));
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform() < 0.5 ? std::round(rng.normal() * grid) / grid : rng.normal();
      y[i] = static_cast<int>(rng.uniform_int(2));
    }
    // both classes must be present
    const std::size_t i = rng.uniform_int(n);
    y[i] = 1;
    y[(i + 1 + rng.uniform_int(n - 1)) % n] = 0;
    worst = std::max(worst, std::abs(auc(s, y) - pairwise_auc(s, y)));
  }
  return {worst <= 1e-12, "worst=" + num(worst) + " over 1000 cases"};
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

Outcome directional(double& seconds) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> lr, fm, xd;
  for (std::uint64_t seed : {1, 2, 3}) {
    SyntheticSpec spec;
    spec.fields = 4;
    spec.vocab_per_field = 8;
    spec.latent_dim = 4;
    spec.n_instances = 50000;
    spec.seed = seed;
    spec.terms = {{{0, 1, 2}, 1.5}};
    const Splits s = split(synthesize(spec).dataset, {}, seed);

    TrainConfig cfg;
    cfg.batch_size = 256;
    cfg.lr = 0.005;
    cfg.max_epochs = 15;
    cfg.patience = 3;
    cfg.seed = seed;
    const auto run = [&](ModelSpec m) {
      return evaluate(train(m, s.train, s.valid, cfg).params, m, s.valid).auc;
    };
    lr.push_back(run(make_preset("LR")));
    fm.push_back(run(make_preset("FM")));
    ModelSpec x = make_preset("xDeepFM");
    x.cin.widths = {16, 16};
    x.dnn.widths = {32, 32};
    xd.push_back(run(x));
  }
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double m_lr = median3(lr), m_fm = median3(fm), m_xd = median3(xd);
  Outcome o;
  o.passed = m_xd - m_lr >= 0.05 && m_xd - m_fm >= 0.02 && seconds < 600;
  o.detail = "median valid AUC xDeepFM=" + num(m_xd) + " LR=" + num(m_lr) + " FM=" + num(m_fm) +
             " time=" + num(seconds) + "s";
  return o;
}

Outcome determinism() {
  const fs::path dir = fs::path(XDFM_TEST_TMP) / "acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream spec(dir / "spec.txt");
    spec << "fields = 4\nvocab_per_field = 8\nn_instances = 3000\nseed = 4\n"
            "term.0.fields = 0,1,2\nterm.0.weight = 1.5\n";
  }
  std::ostringstream out, err;
  if (cli::cmd_synthesize((dir / "spec.txt").string(), (dir / "d.csv").string(), out, err) != 0) {
    return {false, "synthesize failed: " + err.str()};
  }
  KeyValues kv{{"data.path", (dir / "d.csv").string()},
               {"data.schema", (dir / "d.csv.schema").string()},
               {"model.cin_layers", "8,8"},
               {"model.dnn_layers", "16"},
               {"train.batch_size", "128"},
               {"train.epochs", "3"}};
  cli::RunConfig cfg = cli::run_config_from(kv);
  for (const char* run : {"a", "b"}) {
    cfg.output_dir = (dir / run).string();
    if (cli::cmd_train(cfg, out, err) != 0) return {false, "train failed: " + err.str()};
  }
  const bool same_eval = slurp(dir / "a" / "eval.json") == slurp(dir / "b" / "eval.json");
  const bool same_ckpt = slurp(dir / "a" / "model.ckpt") == slurp(dir / "b" / "model.ckpt");
  return {same_eval && same_ckpt, std::string("eval.json ") + (same_eval ? "identical" : "differs") +
                                      ", model.ckpt " + (same_ckpt ? "identical" : "differs")};
}

Outcome checkpoint_round_trip() {
  SyntheticSpec spec;
  spec.n_instances = 600;
  spec.seed = 8;
  spec.terms = {{{0, 1}, 2.0}};
  const Dataset data = synthesize(spec).dataset;
  ModelSpec m = make_preset("xDeepFM");
  m.cin.widths = {4, 3};
  m.dnn.widths = {8};
  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.max_epochs = 2;
  const ModelParams p = train(m, data, Dataset{}, cfg).params;

  const fs::path path = fs::path(XDFM_TEST_TMP) / "acceptance_roundtrip.ckpt";
  fs::create_directories(path.parent_path());
  save_checkpoint(path.string(), p, m, &data.schema, cfg.seed);
  const Checkpoint c = load_checkpoint(path.string());
  const Vec a = flatten(p, m);
  const Vec b = flatten(c.params, c.spec);
  const bool bitwise =
      a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    const Instance& inst = data.instances[i];
    if (forward(inst, p, m) != forward(inst, c.params, c.spec)) ++mismatched;
  }
  return {bitwise && mismatched == 0, std::string("parameters ") + (bitwise ? "bitwise equal" : "differ") +
                                          ", " + std::to_string(mismatched) + "/100 scores differ"};
}

}  // namespace

int main() {
  using Clock = std::chrono::steady_clock;
  const auto timed = [](const std::function<oracle::CheckReport()>& f, double& seconds) {
    const auto start = Clock::now();
    oracle::CheckReport r = f();
    seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return r;
  };

  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"gradients",
       [&] {
         double s = 0;
         const auto r = timed([] { return oracle::gradient_suite(); }, s);
         return from_report(r, s, 60);
       }},
      {"crossnet_collinearity",
       [&] {
         double s = 0;
         const auto r = timed([] { return oracle::collinearity_suite(); }, s);
         return from_report(r, s, 5);
       }},
      {"polynomial_oracle",
       [&] {
         double s = 0;
         const auto r = timed([] { return oracle::polynomial_suite(); }, s);
         return from_report(r, s, 60);
       }},
      {"parameter_census",
       [&] {
         double s = 0;
         const auto r = timed([] { return oracle::params_suite(); }, s);
         return from_report(r, s, 60);
       }},
      {"fm_reduction",
       [&] {
         double s = 0;
         const auto r = timed([] { return oracle::fm_reduction_suite(); }, s);
         return from_report(r, s, 60);
       }},
      {"low_rank",
       [&] {
         double s = 0;
         const auto r = timed([] { return oracle::low_rank_suite(); }, s);
         return from_report(r, s, 60);
       }},
      {"auc_oracle", auc_oracle},
      {"directional_learning",
       [] {
         double s = 0;
         return directional(s);
       }},
      {"determinism", determinism},
      {"checkpoint_round_trip", checkpoint_round_trip},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.passed) ++failures;
    std::cout << (o.passed ? "PASS" : "FAIL") << " " << std::setw(2) << i + 1 << " "
              << criteria[i].name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
