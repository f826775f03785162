#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "cirgps/graph.hpp"

namespace cirgps {

// Marks a node that cannot reach one of the anchors (possible after frontier
// truncation).
inline constexpr int kUnreachable = -1;

// Per local node: (distance to anchor m, distance to anchor n).
struct DspdTable {
  std::vector<std::array<int, 2>> rows;

  std::size_t size() const { return rows.size(); }
  bool operator==(const DspdTable&) const = default;
};

struct LocalEdge {
  int src = 0;
  int dst = 0;
  EdgeType type = EdgeType::DevicePin;

  bool operator==(const LocalEdge&) const = default;
};

// h-hop neighbourhood of one or two anchors, induced from the global graph.
struct EnclosingSubgraph {
  std::vector<int> nodes;  // local -> global
  std::vector<std::string> names;
  std::vector<NodeType> node_types;
  std::vector<LocalEdge> edges;
  StatsMatrix stats;  // local rows of X_C
  int anchor_m = 0;
  int anchor_n = 0;
  int hops = 1;
  // Link type for link tasks; unset (-1) for node tasks.
  int link_type = -1;
  Polarity polarity = Polarity::Positive;
  // Class label (1/0) for link prediction, normalized target for regression.
  double label = 0.0;
  // Raw capacitance target in farads; -1 when the sample has none.
  double target = -1.0;
  std::size_t truncated = 0;
  DspdTable dspd;

  std::size_t num_nodes() const { return nodes.size(); }
  bool is_node_task() const { return anchor_m == anchor_n; }
  bool operator==(const EnclosingSubgraph& other) const;
};

// Compressed adjacency of a subgraph; each undirected edge appears in both
// endpoints' ranges.
struct LocalAdjacency {
  std::vector<int> offsets;
  std::vector<int> targets;

  explicit LocalAdjacency(const EnclosingSubgraph& sg);
  std::size_t degree(int v) const { return static_cast<std::size_t>(offsets[v + 1] - offsets[v]); }
};

}  // namespace cirgps
