#include "xdfm/metrics.h"

#include <algorithm>
#include <numeric>
#include <vector>

#include "json.hpp"
#include "xdfm/error.h"

namespace xdfm {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw MetricError("auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of 1-based midranks of the positives.
  double rank_sum = 0.0;
  std::size_t positives = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw MetricError("AUC is undefined unless both classes are present");
  }
  const double np = static_cast<double>(positives);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(negatives));
}

std::string to_json(const EvalReport& report) {
  nlohmann::ordered_json js;
  js["auc"] = report.auc;
  js["logloss"] = report.logloss;
  js["n"] = report.n;
  js["positives"] = report.positives;
  return js.dump();
}

EvalReport evaluate_predictions(std::span<const double> preds, std::span<const int> labels) {
  if (preds.empty()) throw MetricError("cannot evaluate an empty dataset");
  EvalReport report;
  report.n = preds.size();
  report.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  report.auc = auc(preds, labels);
  report.logloss = logloss(preds, labels);
  return report;
}

EvalReport evaluate(const ModelParams& params, const ModelSpec& spec, const Dataset& data) {
  if (data.empty()) throw MetricError("cannot evaluate an empty dataset");
  std::vector<double> preds;
  std::vector<int> labels;
  preds.reserve(data.size());
  labels.reserve(data.size());
  for (const auto& inst : data.instances) {
    preds.push_back(forward(inst, params, spec));
    labels.push_back(inst.label);
  }
  return evaluate_predictions(preds, labels);
}

}  // namespace xdfm
