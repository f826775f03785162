#include "cirgps/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace cirgps {
namespace {

void check_inputs(std::size_t a, std::size_t b) {
  if (a != b) throw std::invalid_argument("metric inputs differ in length");
  if (a == 0) throw std::invalid_argument("metrics of an empty set are undefined");
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const double> labels) {
  check_inputs(scores.size(), labels.size());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  double positives = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] > 0.5) {
        pos_rank_sum += avg_rank;
        positives += 1.0;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(scores.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (pos_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

ClassificationMetrics classification_metrics(std::span<const double> scores, std::span<const double> labels,
                                             double threshold) {
  check_inputs(scores.size(), labels.size());
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool truth = labels[i] > 0.5;
    correct += pred == truth;
    tp += pred && truth;
    fp += pred && !truth;
    fn += !pred && truth;
  }
  ClassificationMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(scores.size());
  const std::size_t denom = 2 * tp + fp + fn;
  m.f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  m.auc = roc_auc(scores, labels);
  return m;
}

RegressionMetrics regression_metrics(std::span<const double> predictions, std::span<const double> targets) {
  check_inputs(predictions.size(), targets.size());
  const double n = static_cast<double>(targets.size());
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / n;
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  double tot = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double d = predictions[i] - targets[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
    tot += (targets[i] - mean) * (targets[i] - mean);
  }
  RegressionMetrics m;
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  if (tot == 0.0) {
    m.r2 = sq_sum == 0.0 ? 1.0 : 0.0;
  } else {
    m.r2 = 1.0 - sq_sum / tot;
  }
  return m;
}

nlohmann::json to_json(const ClassificationMetrics& m) {
  return {{"accuracy", m.accuracy}, {"f1", m.f1}, {"auc", number_or_null(m.auc)}};
}

nlohmann::json to_json(const RegressionMetrics& m) { return {{"mae", m.mae}, {"rmse", m.rmse}, {"r2", m.r2}}; }

}  // namespace cirgps
