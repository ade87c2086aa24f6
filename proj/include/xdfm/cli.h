#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "xdfm/kv.h"
#include "xdfm/model.h"
#include "xdfm/optim.h"
#include "xdfm/oracle.h"

namespace xdfm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

// Flat settings for every command. Keys mirror the config file:
//   data.train data.valid data.test data.path data.schema
//   model.preset model.parts model.embedding_dim model.dnn_layers
//   model.dnn_activation model.cin_layers model.cin_activation model.cin_rank
//   model.cross_depth model.fm_weight model.init_std model.checkpoint
//   train.lr train.batch_size train.epochs train.lambda train.patience
//   train.seed train.bench output.dir
struct RunConfig {
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  // Single file split 8:1:1 when no explicit train file is given.
  std::string data_path;
  std::string schema_path;
  std::string checkpoint_path;
  ModelSpec spec = make_preset("xDeepFM");
  TrainConfig train;
  std::string output_dir = "xdfm_out";
};

// Keys the config parser accepts, grid keys excluded.
const std::vector<std::string>& run_config_keys();
// model.preset is applied first so the other model keys refine it. Unknown
// keys and grid.* keys are rejected and skipped respectively.
RunConfig run_config_from(const KeyValues& kv);

// Candidate values per hyper-parameter; the sweep is their cartesian
// product. An empty list falls back to the base config's value.
struct GridSpec {
  std::vector<std::size_t> cin_depth;
  std::vector<std::size_t> cin_width;
  std::vector<std::size_t> dnn_depth;
  std::vector<std::size_t> dnn_width;
  std::vector<Activation> activation;  // CIN activation
  std::vector<double> lr;
  std::vector<double> lambda;
};

const std::vector<std::string>& grid_keys();
// Reads grid.<name> = comma list entries; other keys are ignored.
GridSpec grid_spec_from(const KeyValues& kv);

struct GridPoint {
  std::size_t index = 0;
  std::size_t cin_depth = 0;
  std::size_t cin_width = 0;
  std::size_t dnn_depth = 0;
  std::size_t dnn_width = 0;
  Activation activation = Activation::kIdentity;
  double lr = 0.0;
  double lambda = 0.0;
};

// Cartesian product in row-major order over the keys above.
std::vector<GridPoint> expand_grid(const GridSpec& grid, const RunConfig& base);

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);
// Scores a checkpoint on data.test (or data.path) and prints the report.
int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_gridsearch(const RunConfig& cfg, const GridSpec& grid, std::ostream& out,
                   std::ostream& err);

// collinearity, polynomial, params, fm_reduction, gradients; low_rank may
// also be named explicitly.
const std::vector<std::string>& default_checks();
int cmd_verify(const std::vector<std::string>& selection, std::ostream& out, std::ostream& err,
               const oracle::GradientHook& hook = {});

// Writes the CSV at out_path, its schema at out_path + ".schema" and the
// manifest at out_path + ".manifest.json".
int cmd_synthesize(const std::string& spec_path, const std::string& out_path, std::ostream& out,
                   std::ostream& err);

}  // namespace xdfm::cli
