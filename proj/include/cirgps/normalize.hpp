#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cirgps/graph.hpp"
#include "cirgps/subgraph.hpp"

namespace cirgps {

// log10 then min-max onto [0, 1]. Exact zero (negative links) maps to 0.
class TargetNormalizer {
 public:
  TargetNormalizer(double lo = 1e-21, double hi = 1e-15);

  double lo() const { return lo_; }
  double hi() const { return hi_; }

  bool in_range(double farads) const { return farads == 0.0 || (farads >= lo_ && farads <= hi_); }
  // nullopt when the value falls outside [lo, hi].
  std::optional<double> forward(double farads) const;
  double inverse(double normalized) const;

  nlohmann::json to_json() const;
  static TargetNormalizer from_json(const nlohmann::json& j);

 private:
  double lo_;
  double hi_;
  double log_lo_;
  double log_span_;
};

struct NormalizedTargets {
  std::vector<TargetLink> kept;
  std::vector<double> values;  // normalized target per kept link
  std::size_t dropped = 0;
};

NormalizedTargets normalize_targets(std::span<const TargetLink> links, const TargetNormalizer& normalizer);

// Per-node-type, per-dimension min-max scaling of X_C fitted on a training
// split. Pin rows hold categorical terminal codes and pass through untouched.
class StatsNormalizer {
 public:
  StatsNormalizer();

  void fit(std::span<const EnclosingSubgraph> train);
  void fit(const StatsMatrix& rows, std::span<const NodeType> types);
  StatsMatrix apply(const StatsMatrix& rows, std::span<const NodeType> types) const;

  bool fitted() const { return fitted_; }
  nlohmann::json to_json() const;
  static StatsNormalizer from_json(const nlohmann::json& j);

 private:
  void accumulate(const StatsMatrix& rows, std::span<const NodeType> types);

  std::array<std::array<double, kStatsDim>, 2> min_{};
  std::array<std::array<double, kStatsDim>, 2> max_{};
  bool fitted_ = false;
};

}  // namespace cirgps
