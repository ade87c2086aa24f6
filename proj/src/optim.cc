#include "xdfm/optim.h"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "json.hpp"
#include "xdfm/error.h"
#include "xdfm/metrics.h"

namespace xdfm {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and moment sizes differ");
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = state.m[i] / correct1;
    const double v_hat = state.v[i] / correct2;
    params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

void adam_step(ModelParams& params, const ModelParams& grads, const ModelSpec& spec,
               AdamState& state) {
  auto pg = param_groups(params, spec);
  auto gg = param_groups(grads, spec);
  std::size_t total = 0;
  for (const auto& g : pg) total += g.values.size();
  if (state.m.size() != total || state.v.size() != total) {
    throw DimensionError("adam_step: optimizer state does not match the model");
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < pg.size(); ++k) {
    auto p = pg[k].values;
    auto g = gg[k].values;
    if (p.size() != g.size()) throw DimensionError("adam_step: group " + pg[k].name + " mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      double& m = state.m[offset + i];
      double& v = state.v[offset + i];
      m = c.beta1 * m + (1.0 - c.beta1) * g[i];
      v = c.beta2 * v + (1.0 - c.beta2) * g[i] * g[i];
      p[i] -= c.lr * (m / correct1) / (std::sqrt(v / correct2) + c.epsilon);
    }
    offset += p.size();
  }
}

namespace {

nlohmann::ordered_json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

struct ValidScore {
  double loss = std::numeric_limits<double>::quiet_NaN();
  double auc = std::numeric_limits<double>::quiet_NaN();
};

ValidScore score_validation(const ModelParams& params, const ModelSpec& spec,
                            const Dataset& valid) {
  ValidScore out;
  if (valid.empty()) return out;
  std::vector<double> preds;
  std::vector<int> labels;
  preds.reserve(valid.size());
  labels.reserve(valid.size());
  for (const auto& inst : valid.instances) {
    preds.push_back(forward(inst, params, spec));
    labels.push_back(inst.label);
  }
  out.loss = logloss(preds, labels);
  const std::size_t pos = valid.positives();
  if (pos > 0 && pos < valid.size()) out.auc = auc(preds, labels);
  return out;
}

// Seconds spent on forward + backward of the CIN and DNN parts alone.
void bench_parts(const ModelParams& params, const ModelSpec& spec, const Dataset& data,
                 EpochRecord& record) {
  using Clock = std::chrono::steady_clock;
  ModelParams scratch = zeros_like(params, spec);
  if (spec.has(Part::kCin)) {
    const auto start = Clock::now();
    CinCache cache;
    const Vec ones(params.cin.pooled_width(), 1.0);
    for (const auto& inst : data.instances) {
      const Mat x0 = embed_forward(inst, params.embedding);
      cin_forward(x0, params.cin, &cache);
      cin_backward(params.cin, cache, ones, scratch.cin);
    }
    record.cin_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  }
  if (spec.has(Part::kDnn)) {
    const auto start = Clock::now();
    DnnCache cache;
    const Vec ones(params.dnn.output_width(), 1.0);
    for (const auto& inst : data.instances) {
      const Mat x0 = embed_forward(inst, params.embedding);
      dnn_forward(x0.values(), params.dnn, &cache);
      dnn_backward(params.dnn, cache, ones, scratch.dnn);
    }
    record.dnn_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  }
}

}  // namespace

std::string to_json(const EpochRecord& record) {
  nlohmann::ordered_json js;
  js["epoch"] = record.epoch;
  js["train_loss"] = number_or_null(record.train_loss);
  js["valid_loss"] = number_or_null(record.valid_loss);
  js["valid_auc"] = number_or_null(record.valid_auc);
  js["seconds"] = record.seconds;
  if (record.cin_seconds) js["cin_seconds"] = *record.cin_seconds;
  if (record.dnn_seconds) js["dnn_seconds"] = *record.dnn_seconds;
  return js.dump();
}

void write_history_jsonl(std::ostream& out, const TrainHistory& history) {
  for (const auto& record : history.epochs) out << to_json(record) << '\n';
}

TrainResult train(const ModelSpec& spec, const Dataset& train_data, const Dataset& valid_data,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  if (train_data.empty()) throw TrainingError("training set is empty");
  if (!(config.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (config.batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (config.lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (!valid_data.empty() && valid_data.schema.num_fields() != train_data.schema.num_fields()) {
    throw ConfigError("training and validation schemas differ");
  }

  const std::size_t fields = train_data.schema.num_fields();
  const std::size_t vocab = train_data.schema.vocab_size();
  TrainResult result;
  result.params = init_params(spec, fields, vocab, derive_seed(config.seed, 0));
  ModelParams& params = result.params;

  AdamState adam(num_parameters(params, spec), AdamConfig{config.lr});
  ModelParams grads = zeros_like(params, spec);

  const double n = static_cast<double>(train_data.size());
  ModelParams best = params;
  double best_score = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  using Clock = std::chrono::steady_clock;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = Clock::now();
    const auto plan = batches(train_data, config.batch_size, true, derive_seed(config.seed, epoch));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const auto& batch = plan[b];
      zero_fill(grads, spec);
      const double reg = config.lambda * static_cast<double>(batch.size()) / n;
      const BatchStats stats =
          batch_objective(train_data.instances, batch, params, spec, reg, &grads);
      if (!std::isfinite(stats.objective)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b + 1));
      }
      loss_sum += stats.loss * static_cast<double>(batch.size());
      adam_step(params, grads, spec, adam);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / n;
    const ValidScore vs = score_validation(params, spec, valid_data);
    record.valid_loss = vs.loss;
    record.valid_auc = vs.auc;
    record.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    if (config.bench) bench_parts(params, spec, train_data, record);
    result.history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);

    // Validation AUC selects the model; validation loss stands in when the
    // AUC is undefined, the last epoch when there is no validation data.
    double score = std::isfinite(vs.auc) ? vs.auc : -vs.loss;
    if (valid_data.empty()) score = static_cast<double>(epoch);
    if (score > best_score) {
      best_score = score;
      best = params;
      result.history.best_epoch = epoch;
      stale = 0;
    } else {
      ++stale;
      if (config.patience > 0 && stale >= config.patience) break;
    }
  }
  if (result.history.best_epoch > 0) params = std::move(best);
  return result;
}

}  // namespace xdfm
