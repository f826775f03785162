#include "cirgps/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cirgps {

TargetNormalizer::TargetNormalizer(double lo, double hi) : lo_(lo), hi_(hi) {
  if (!(lo > 0.0) || !(hi > lo) || !std::isfinite(hi)) throw std::invalid_argument("normalizer needs 0 < lo < hi");
  log_lo_ = std::log10(lo);
  log_span_ = std::log10(hi) - log_lo_;
}

std::optional<double> TargetNormalizer::forward(double farads) const {
  if (farads == 0.0) return 0.0;
  if (!(farads >= lo_ && farads <= hi_)) return std::nullopt;
  return std::clamp((std::log10(farads) - log_lo_) / log_span_, 0.0, 1.0);
}

double TargetNormalizer::inverse(double normalized) const {
  return std::pow(10.0, log_lo_ + normalized * log_span_);
}

nlohmann::json TargetNormalizer::to_json() const { return {{"lo", lo_}, {"hi", hi_}}; }

TargetNormalizer TargetNormalizer::from_json(const nlohmann::json& j) {
  return TargetNormalizer(j.at("lo").get<double>(), j.at("hi").get<double>());
}

NormalizedTargets normalize_targets(std::span<const TargetLink> links, const TargetNormalizer& normalizer) {
  NormalizedTargets out;
  for (const auto& link : links) {
    const double y = link.polarity == Polarity::Negative ? 0.0 : link.cap_target.value_or(-1.0);
    if (y < 0.0) throw std::invalid_argument("positive link without a capacitance target");
    const auto v = normalizer.forward(y);
    if (!v) {
      ++out.dropped;
      continue;
    }
    out.kept.push_back(link);
    out.values.push_back(*v);
  }
  return out;
}

StatsNormalizer::StatsNormalizer() {
  for (auto& row : min_) row.fill(std::numeric_limits<double>::infinity());
  for (auto& row : max_) row.fill(-std::numeric_limits<double>::infinity());
}

void StatsNormalizer::accumulate(const StatsMatrix& rows, std::span<const NodeType> types) {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const auto t = types[static_cast<std::size_t>(i)];
    if (t == NodeType::Pin) continue;
    const auto k = static_cast<std::size_t>(t);
    for (int d = 0; d < kStatsDim; ++d) {
      min_[k][d] = std::min(min_[k][d], rows(i, d));
      max_[k][d] = std::max(max_[k][d], rows(i, d));
    }
  }
  fitted_ = true;
}

void StatsNormalizer::fit(const StatsMatrix& rows, std::span<const NodeType> types) {
  *this = StatsNormalizer();
  accumulate(rows, types);
}

void StatsNormalizer::fit(std::span<const EnclosingSubgraph> train) {
  if (train.empty()) throw std::invalid_argument("cannot fit statistics on an empty training split");
  *this = StatsNormalizer();
  for (const auto& sg : train) accumulate(sg.stats, sg.node_types);
}

StatsMatrix StatsNormalizer::apply(const StatsMatrix& rows, std::span<const NodeType> types) const {
  StatsMatrix out = rows;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const auto t = types[static_cast<std::size_t>(i)];
    if (t == NodeType::Pin) continue;
    const auto k = static_cast<std::size_t>(t);
    for (int d = 0; d < kStatsDim; ++d) {
      const double lo = min_[k][d];
      const double hi = max_[k][d];
      // Constant (or never observed) dimensions map to 0.
      if (!(hi > lo)) {
        out(i, d) = 0.0;
        continue;
      }
      out(i, d) = std::clamp((rows(i, d) - lo) / (hi - lo), 0.0, 1.0);
    }
  }
  return out;
}

nlohmann::json StatsNormalizer::to_json() const {
  nlohmann::json j;
  for (std::size_t k = 0; k < 2; ++k) {
    nlohmann::json lo = nlohmann::json::array();
    nlohmann::json hi = nlohmann::json::array();
    for (int d = 0; d < kStatsDim; ++d) {
      // JSON has no infinities; unobserved dimensions are written as 0/0.
      lo.push_back(std::isfinite(min_[k][d]) ? min_[k][d] : 0.0);
      hi.push_back(std::isfinite(max_[k][d]) ? max_[k][d] : 0.0);
    }
    j[k == 0 ? "net" : "device"] = {{"min", lo}, {"max", hi}};
  }
  j["fitted"] = fitted_;
  return j;
}

StatsNormalizer StatsNormalizer::from_json(const nlohmann::json& j) {
  StatsNormalizer s;
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& part = j.at(k == 0 ? "net" : "device");
    for (int d = 0; d < kStatsDim; ++d) {
      s.min_[k][d] = part.at("min").at(d).get<double>();
      s.max_[k][d] = part.at("max").at(d).get<double>();
    }
  }
  s.fitted_ = j.value("fitted", true);
  return s;
}

}  // namespace cirgps
