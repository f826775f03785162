#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "cirgps/labels.hpp"
#include "cirgps/netlist.hpp"

namespace cirgps {

enum class NodeType : std::uint8_t { Net = 0, Device = 1, Pin = 2 };

enum class EdgeType : std::uint8_t { DevicePin = 0, NetPin = 1, PinNet = 2, PinPin = 3, NetNet = 4 };

inline constexpr int kNumNodeTypes = 3;
inline constexpr int kNumEdgeTypes = 5;
inline constexpr int kStatsDim = 13;
inline constexpr int kNetStatsDim = 13;
inline constexpr int kDeviceStatsDim = 11;
inline constexpr int kNumPinCodes = 4;

inline bool is_link_type(EdgeType t) { return t == EdgeType::PinNet || t == EdgeType::PinPin || t == EdgeType::NetNet; }

using StatsMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Edge {
  std::int32_t src = 0;
  std::int32_t dst = 0;
  EdgeType type = EdgeType::DevicePin;

  bool operator==(const Edge&) const = default;
};

struct Neighbor {
  std::int32_t node = 0;
  std::int32_t edge = 0;
};

// Whole-design heterogeneous graph. Edges are undirected: stored once,
// visible from both endpoints' adjacency lists.
class CircuitGraph {
 public:
  int add_node(NodeType type, std::string name);
  int add_edge(int a, int b, EdgeType type);

  std::size_t num_nodes() const { return types_.size(); }
  std::size_t num_edges() const { return edges_.size(); }

  NodeType node_type(int i) const { return types_[i]; }
  const std::string& name(int i) const { return names_[i]; }
  std::span<const Neighbor> neighbors(int i) const { return adjacency_[i]; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<NodeType>& node_types() const { return types_; }

  // Net and pin lookup by hierarchical name. Device names are not indexed
  // since they may coincide with net names.
  std::optional<int> find(std::string_view name) const;

  bool has_edge(int a, int b) const;

  bool is_port(int i) const { return i < static_cast<int>(is_port_.size()) && is_port_[i]; }
  void set_port(int i, bool v);

  // Circuit statistics X_C, one row per node, kStatsDim columns. Empty until
  // compute_circuit_stats has been applied.
  StatsMatrix stats;

  // Interchange text: "N N_E", then "idx type name" per node, then
  // "src dst etype" per edge.
  std::string dump() const;
  static CircuitGraph load(std::string_view text);

 private:
  std::vector<NodeType> types_;
  std::vector<std::string> names_;
  std::vector<Edge> edges_;
  std::vector<std::vector<Neighbor>> adjacency_;
  std::vector<bool> is_port_;
  std::unordered_map<std::string, int> index_;
};

// One node per net, device and device terminal. Nets come first (flat order),
// then devices, then pins grouped by device.
CircuitGraph build_graph(const FlatCircuit& flat);

struct StatsReport {
  StatsMatrix stats;
  // Geometric parameters (w, l) a device needed but did not declare.
  std::size_t missing_params = 0;
};

// Table-of-dimensions layout:
//   net:    0 #transistors 1 #gate 2 #source/drain 3 #bulk 4 sum W 5 sum L
//           6 #capacitors 7 sum cap L 8 sum cap fingers 9 #resistors
//           10 sum res W 11 sum res L 12 #port bindings
//   device: 0 mos m 1 mos L 2 mos W 3 res m 4 res L 5 res W 6 cap m
//           7 cap L 8 cap fingers 9 #terminals 10 type code
//   pin:    0 terminal code (G/D/S/B = 0/1/2/3, two-terminal = 0/1)
// Values stay in SI units. Multipliers and finger counts default to 1.
StatsReport compute_circuit_stats(const CircuitGraph& g, const FlatCircuit& flat);

// build_graph followed by compute_circuit_stats.
CircuitGraph build_graph_with_stats(const FlatCircuit& flat, std::size_t* missing_params = nullptr);

std::string dump_stats(const StatsMatrix& stats);
StatsMatrix load_stats(std::string_view text);

enum class Polarity : std::uint8_t { Negative = 0, Positive = 1 };

struct TargetLink {
  int a = 0;
  int b = 0;
  EdgeType link_type = EdgeType::NetNet;
  Polarity polarity = Polarity::Positive;
  std::optional<double> cap_target;

  double label() const { return polarity == Polarity::Positive ? 1.0 : 0.0; }
  bool operator==(const TargetLink&) const = default;
};

// Link type implied by the endpoint node types; nullopt for devices.
std::optional<EdgeType> link_type_for(NodeType a, NodeType b);

// Adds every link as an undirected edge of its link type. Throws GraphError
// on a node-type mismatch or when the pair is already connected.
CircuitGraph inject_links(const CircuitGraph& g, std::span<const TargetLink> links);

struct LinkMatch {
  std::vector<TargetLink> links;
  std::size_t unresolved = 0;   // endpoint not found as net or pin
  std::size_t self_loops = 0;   // both endpoints resolve to one node
  std::size_t merged = 0;       // parallel statements summed into one link
};

// Resolves label endpoints (full name first, then the parent net of a
// subnode) and produces positive links. Pin-net links are oriented (pin, net).
LinkMatch match_labels(const CircuitGraph& g, std::span<const CouplingLabel> labels);

struct NodeTarget {
  int node = 0;
  double capacitance = 0.0;

  bool operator==(const NodeTarget&) const = default;
};

struct NodeMatch {
  std::vector<NodeTarget> targets;
  std::size_t unresolved = 0;
  std::size_t merged = 0;
};

NodeMatch match_ground_labels(const CircuitGraph& g, std::span<const GroundLabel> labels);

std::string dump_links(std::span<const TargetLink> links);
std::vector<TargetLink> load_links(std::string_view text);

}  // namespace cirgps
