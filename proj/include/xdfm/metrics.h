#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "xdfm/data.h"
#include "xdfm/model.h"

namespace xdfm {

// Area under the ROC curve through the Mann-Whitney rank statistic; tied
// scores share their average rank, so each positive/negative tie counts 1/2.
// Throws MetricError unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct EvalReport {
  double auc = 0.0;
  double logloss = 0.0;
  std::size_t n = 0;
  std::size_t positives = 0;
};

std::string to_json(const EvalReport& report);

// Scores every instance with the model and fills the report.
EvalReport evaluate(const ModelParams& params, const ModelSpec& spec, const Dataset& data);
EvalReport evaluate_predictions(std::span<const double> preds, std::span<const int> labels);

}  // namespace xdfm
