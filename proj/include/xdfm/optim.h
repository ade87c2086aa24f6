#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xdfm/data.h"
#include "xdfm/model.h"

namespace xdfm {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  Vec m;
  Vec v;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(std::size_t size, AdamConfig cfg) : config(cfg), m(size, 0.0), v(size, 0.0) {}
};

// One bias-corrected Adam update over a flat parameter vector. The step
// counter advances before the correction.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);
// Same update applied to every learnable group of the model in order.
void adam_step(ModelParams& params, const ModelParams& grads, const ModelSpec& spec,
               AdamState& state);

struct TrainConfig {
  double lr = 0.001;
  std::size_t batch_size = 4096;
  std::size_t max_epochs = 10;
  double lambda = kDefaultLambda;
  // Stop after this many epochs without a validation AUC improvement; 0
  // turns early stopping off.
  std::size_t patience = 2;
  std::uint64_t seed = 1;
  // Time CIN and DNN forward/backward passes separately each epoch.
  bool bench = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  // NaN when the validation set is empty or single-class.
  double valid_loss = 0.0;
  double valid_auc = 0.0;
  double seconds = 0.0;
  std::optional<double> cin_seconds;
  std::optional<double> dnn_seconds;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  // 1-based epoch whose parameters were returned; 0 for the initial ones.
  std::size_t best_epoch = 0;
};

std::string to_json(const EpochRecord& record);
void write_history_jsonl(std::ostream& out, const TrainHistory& history);

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch Adam on the regularized objective. Each batch of size B carries
// lambda * B / N of the penalty so an epoch adds up to lambda * penalty.
// Returns the parameters of the best validation epoch.
TrainResult train(const ModelSpec& spec, const Dataset& train_data, const Dataset& valid_data,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace xdfm
