#include "cirgps/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace cirgps {

int CircuitGraph::add_node(NodeType type, std::string name) {
  const int id = static_cast<int>(types_.size());
  if (type != NodeType::Device) {
    if (!index_.emplace(name, id).second) throw GraphError("duplicate node name '" + name + "'");
  }
  types_.push_back(type);
  names_.push_back(std::move(name));
  adjacency_.emplace_back();
  return id;
}

int CircuitGraph::add_edge(int a, int b, EdgeType type) {
  const int n = static_cast<int>(types_.size());
  if (a < 0 || b < 0 || a >= n || b >= n) throw GraphError("edge endpoint out of range");
  if (a == b) throw GraphError("self-loop edge");
  const int id = static_cast<int>(edges_.size());
  edges_.push_back({a, b, type});
  adjacency_[a].push_back({b, id});
  adjacency_[b].push_back({a, id});
  return id;
}

std::optional<int> CircuitGraph::find(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool CircuitGraph::has_edge(int a, int b) const {
  const auto& shorter = adjacency_[a].size() <= adjacency_[b].size() ? adjacency_[a] : adjacency_[b];
  const int other = adjacency_[a].size() <= adjacency_[b].size() ? b : a;
  return std::any_of(shorter.begin(), shorter.end(), [other](const Neighbor& nb) { return nb.node == other; });
}

void CircuitGraph::set_port(int i, bool v) {
  if (is_port_.size() < types_.size()) is_port_.resize(types_.size(), false);
  is_port_[i] = v;
}

std::string CircuitGraph::dump() const {
  std::string out = fmt::format("{} {}\n", types_.size(), edges_.size());
  for (std::size_t i = 0; i < types_.size(); ++i) {
    out += fmt::format("{} {} {}\n", i, static_cast<int>(types_[i]), names_[i]);
  }
  for (const auto& e : edges_) out += fmt::format("{} {} {}\n", e.src, e.dst, static_cast<int>(e.type));
  return out;
}

namespace {

template <typename T>
T read_int(std::istringstream& in, std::size_t line) {
  long long v = 0;
  if (!(in >> v)) throw ParseError("expected an integer", line, 0);
  return static_cast<T>(v);
}

std::string next_line(std::istringstream& in, std::size_t& line_no) {
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) return line;
  }
  throw ParseError("unexpected end of graph data", line_no, 0);
}

}  // namespace

CircuitGraph CircuitGraph::load(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  CircuitGraph g;
  std::istringstream header(next_line(in, line_no));
  const auto n = read_int<std::size_t>(header, line_no);
  const auto ne = read_int<std::size_t>(header, line_no);
  for (std::size_t i = 0; i < n; ++i) {
    std::istringstream row(next_line(in, line_no));
    const auto idx = read_int<std::size_t>(row, line_no);
    const auto type = read_int<int>(row, line_no);
    std::string name;
    row >> name;
    if (idx != i || type < 0 || type >= kNumNodeTypes || name.empty()) throw ParseError("bad node line", line_no, 0);
    g.add_node(static_cast<NodeType>(type), name);
  }
  for (std::size_t i = 0; i < ne; ++i) {
    std::istringstream row(next_line(in, line_no));
    const auto a = read_int<int>(row, line_no);
    const auto b = read_int<int>(row, line_no);
    const auto t = read_int<int>(row, line_no);
    if (t < 0 || t >= kNumEdgeTypes) throw ParseError("bad edge type", line_no, 0);
    g.add_edge(a, b, static_cast<EdgeType>(t));
  }
  return g;
}

CircuitGraph build_graph(const FlatCircuit& flat) {
  CircuitGraph g;
  for (const auto& net : flat.nets) {
    const int id = g.add_node(NodeType::Net, net.path);
    if (net.is_port) g.set_port(id, true);
  }
  const int device_base = static_cast<int>(flat.nets.size());
  for (const auto& dev : flat.devices) g.add_node(NodeType::Device, dev.path);
  for (const auto& pin : flat.pins) {
    const int id = g.add_node(NodeType::Pin, flat.pin_path(pin));
    g.add_edge(device_base + pin.device, id, EdgeType::DevicePin);
    g.add_edge(pin.net, id, EdgeType::NetPin);
  }
  return g;
}

namespace {

double param_or(const FlatDevice& dev, const char* key, double fallback) {
  const auto it = dev.params.find(key);
  return it == dev.params.end() ? fallback : it->second;
}

double geometric(const FlatDevice& dev, const char* key, std::size_t& missing) {
  const auto it = dev.params.find(key);
  if (it == dev.params.end()) {
    ++missing;
    return 0.0;
  }
  return it->second;
}

int pin_code(const std::string& terminal) {
  if (terminal == "g") return 0;
  if (terminal == "d") return 1;
  if (terminal == "s") return 2;
  if (terminal == "b") return 3;
  if (terminal == "1") return 0;
  if (terminal == "2") return 1;
  return 0;
}

}  // namespace

StatsReport compute_circuit_stats(const CircuitGraph& g, const FlatCircuit& flat) {
  const int nets = static_cast<int>(flat.nets.size());
  const int devices = static_cast<int>(flat.devices.size());
  if (g.num_nodes() != flat.nets.size() + flat.devices.size() + flat.pins.size()) {
    throw GraphError("graph was not built from this circuit");
  }
  StatsReport report;
  report.stats = StatsMatrix::Zero(static_cast<Eigen::Index>(g.num_nodes()), kStatsDim);
  auto& x = report.stats;

  struct Geometry {
    double m, w, l, nf;
  };
  std::vector<Geometry> geo(flat.devices.size());
  for (int d = 0; d < devices; ++d) {
    const auto& dev = flat.devices[d];
    auto row = x.row(nets + d);
    Geometry& gm = geo[d];
    gm.m = param_or(dev, "m", 1.0);
    gm.nf = param_or(dev, "nf", 1.0);
    gm.w = gm.l = 0.0;
    switch (dev.type) {
      case DeviceType::Nmos:
      case DeviceType::Pmos:
        gm.w = geometric(dev, "w", report.missing_params);
        gm.l = geometric(dev, "l", report.missing_params);
        row(0) = gm.m;
        row(1) = gm.l;
        row(2) = gm.w;
        break;
      case DeviceType::Resistor:
        gm.w = geometric(dev, "w", report.missing_params);
        gm.l = geometric(dev, "l", report.missing_params);
        row(3) = gm.m;
        row(4) = gm.l;
        row(5) = gm.w;
        break;
      case DeviceType::Capacitor:
        gm.l = geometric(dev, "l", report.missing_params);
        row(6) = gm.m;
        row(7) = gm.l;
        row(8) = gm.nf;
        break;
      case DeviceType::Diode:
        break;
    }
    row(9) = static_cast<double>(dev.terminals.size());
    row(10) = static_cast<double>(static_cast<int>(dev.type));
  }

  // Per net: per-terminal counts, and per-distinct-device aggregates.
  std::vector<std::vector<int>> devices_on_net(flat.nets.size());
  const int pin_base = nets + devices;
  for (std::size_t p = 0; p < flat.pins.size(); ++p) {
    const auto& pin = flat.pins[p];
    const auto& dev = flat.devices[pin.device];
    const std::string& terminal = dev.terminals[pin.terminal];
    x(pin_base + static_cast<int>(p), 0) = pin_code(terminal);
    auto row = x.row(pin.net);
    if (is_transistor(dev.type)) {
      if (terminal == "g") row(1) += 1;
      if (terminal == "d" || terminal == "s") row(2) += 1;
      if (terminal == "b") row(3) += 1;
    }
    devices_on_net[pin.net].push_back(pin.device);
  }
  for (int n = 0; n < nets; ++n) {
    auto& list = devices_on_net[n];
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    auto row = x.row(n);
    for (int d : list) {
      const auto& gm = geo[d];
      switch (flat.devices[d].type) {
        case DeviceType::Nmos:
        case DeviceType::Pmos:
          row(0) += 1;
          row(4) += gm.w;
          row(5) += gm.l;
          break;
        case DeviceType::Capacitor:
          row(6) += 1;
          row(7) += gm.l;
          row(8) += gm.nf;
          break;
        case DeviceType::Resistor:
          row(9) += 1;
          row(10) += gm.w;
          row(11) += gm.l;
          break;
        case DeviceType::Diode:
          break;
      }
    }
    row(12) = flat.nets[n].port_count;
  }
  return report;
}

CircuitGraph build_graph_with_stats(const FlatCircuit& flat, std::size_t* missing_params) {
  CircuitGraph g = build_graph(flat);
  auto report = compute_circuit_stats(g, flat);
  g.stats = std::move(report.stats);
  if (missing_params != nullptr) *missing_params = report.missing_params;
  return g;
}

std::string dump_stats(const StatsMatrix& stats) {
  std::string out = fmt::format("{} {}\n", stats.rows(), stats.cols());
  for (Eigen::Index i = 0; i < stats.rows(); ++i) {
    for (Eigen::Index j = 0; j < stats.cols(); ++j) {
      out += fmt::format("{}{:.17g}", j == 0 ? "" : " ", stats(i, j));
    }
    out += "\n";
  }
  return out;
}

StatsMatrix load_stats(std::string_view text) {
  std::istringstream in{std::string(text)};
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  if (!(in >> rows >> cols) || rows < 0 || cols <= 0) throw ParseError("bad stats header", 1, 0);
  StatsMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      std::string tok;
      if (!(in >> tok)) throw ParseError("truncated stats matrix", static_cast<std::size_t>(i) + 2, 0);
      m(i, j) = std::strtod(tok.c_str(), nullptr);
    }
  }
  return m;
}

std::optional<EdgeType> link_type_for(NodeType a, NodeType b) {
  if (a == NodeType::Device || b == NodeType::Device) return std::nullopt;
  if (a == NodeType::Pin && b == NodeType::Pin) return EdgeType::PinPin;
  if (a == NodeType::Net && b == NodeType::Net) return EdgeType::NetNet;
  return EdgeType::PinNet;
}

CircuitGraph inject_links(const CircuitGraph& g, std::span<const TargetLink> links) {
  CircuitGraph out = g;
  const auto n = static_cast<int>(g.num_nodes());
  for (const auto& link : links) {
    if (link.a < 0 || link.b < 0 || link.a >= n || link.b >= n) throw GraphError("link endpoint out of range");
    if (!is_link_type(link.link_type)) throw GraphError("not a link type");
    const auto expected = link_type_for(g.node_type(link.a), g.node_type(link.b));
    if (!expected || *expected != link.link_type) {
      throw GraphError(fmt::format("link ({}, {}) of type {} does not match endpoint node types", g.name(link.a),
                                   g.name(link.b), static_cast<int>(link.link_type)));
    }
    if (link.a == link.b || out.has_edge(link.a, link.b)) {
      throw GraphError(fmt::format("duplicate link ({}, {})", g.name(link.a), g.name(link.b)));
    }
    out.add_edge(link.a, link.b, link.link_type);
  }
  return out;
}

namespace {

std::optional<int> resolve_endpoint(const CircuitGraph& g, const std::string& name) {
  if (auto id = g.find(name)) return id;
  if (name.find(':') != std::string::npos) return g.find(parent_node(name));
  return std::nullopt;
}

}  // namespace

LinkMatch match_labels(const CircuitGraph& g, std::span<const CouplingLabel> labels) {
  LinkMatch match;
  std::map<std::pair<int, int>, std::size_t> seen;
  for (const auto& label : labels) {
    const auto a = resolve_endpoint(g, label.endpoint_a);
    const auto b = resolve_endpoint(g, label.endpoint_b);
    if (!a || !b) {
      ++match.unresolved;
      continue;
    }
    // Same node, or a pin and the net it already sits on.
    if (*a == *b || g.has_edge(*a, *b)) {
      ++match.self_loops;
      continue;
    }
    TargetLink link;
    link.a = *a;
    link.b = *b;
    link.link_type = *link_type_for(g.node_type(*a), g.node_type(*b));
    if (link.link_type == EdgeType::PinNet && g.node_type(link.a) == NodeType::Net) std::swap(link.a, link.b);
    link.polarity = Polarity::Positive;
    link.cap_target = label.capacitance;
    const auto key = std::minmax(link.a, link.b);
    if (auto it = seen.find(key); it != seen.end()) {
      *match.links[it->second].cap_target += label.capacitance;
      ++match.merged;
      continue;
    }
    seen.emplace(key, match.links.size());
    match.links.push_back(link);
  }
  return match;
}

NodeMatch match_ground_labels(const CircuitGraph& g, std::span<const GroundLabel> labels) {
  NodeMatch match;
  std::map<int, std::size_t> seen;
  for (const auto& label : labels) {
    const auto node = resolve_endpoint(g, label.endpoint);
    if (!node) {
      ++match.unresolved;
      continue;
    }
    if (auto it = seen.find(*node); it != seen.end()) {
      match.targets[it->second].capacitance += label.capacitance;
      ++match.merged;
      continue;
    }
    seen.emplace(*node, match.targets.size());
    match.targets.push_back({*node, label.capacitance});
  }
  return match;
}

std::string dump_links(std::span<const TargetLink> links) {
  std::string out = fmt::format("{}\n", links.size());
  for (const auto& l : links) {
    out += fmt::format("{} {} {} {} {:.17g}\n", l.a, l.b, static_cast<int>(l.link_type), static_cast<int>(l.polarity),
                       l.cap_target.value_or(-1.0));
  }
  return out;
}

std::vector<TargetLink> load_links(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::size_t count = 0;
  if (!(in >> count)) throw ParseError("bad link header", 1, 0);
  std::vector<TargetLink> links;
  links.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    TargetLink l;
    int type = 0;
    int polarity = 0;
    std::string cap;
    if (!(in >> l.a >> l.b >> type >> polarity >> cap)) throw ParseError("truncated link list", i + 2, 0);
    if (type < 2 || type > 4 || polarity < 0 || polarity > 1) throw ParseError("bad link record", i + 2, 0);
    l.link_type = static_cast<EdgeType>(type);
    l.polarity = static_cast<Polarity>(polarity);
    const double c = std::strtod(cap.c_str(), nullptr);
    if (c >= 0.0) l.cap_target = c;
    links.push_back(l);
  }
  return links;
}

}  // namespace cirgps
