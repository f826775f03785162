#pragma once

#include <span>

#include <nlohmann/json.hpp>

namespace cirgps {

struct ClassificationMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;
  double auc = 0.0;  // NaN when only one class is present
};

struct RegressionMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
};

// Labels are 0/1; a score >= threshold predicts the positive class.
ClassificationMetrics classification_metrics(std::span<const double> scores, std::span<const double> labels,
                                             double threshold = 0.5);
// Mann-Whitney statistic with average ranks for tied scores.
double roc_auc(std::span<const double> scores, std::span<const double> labels);
// R^2 with SS_tot = 0 gives 1 for an exact fit and 0 otherwise.
RegressionMetrics regression_metrics(std::span<const double> predictions, std::span<const double> targets);

nlohmann::json to_json(const ClassificationMetrics& m);
nlohmann::json to_json(const RegressionMetrics& m);

}  // namespace cirgps
