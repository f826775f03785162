#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cirgps/netlist.hpp"

namespace cirgps {

struct CouplingLabel {
  std::string endpoint_a;
  std::string endpoint_b;
  double capacitance = 0.0;  // farads, > 0

  bool operator==(const CouplingLabel&) const = default;
};

struct GroundLabel {
  std::string endpoint;
  double capacitance = 0.0;  // farads, >= 0

  bool operator==(const GroundLabel&) const = default;
};

struct LabelOptions {
  std::vector<std::string> reference_nodes = {"0", "gnd", "vss"};
};

struct LabelSet {
  std::vector<CouplingLabel> coupling;
  std::vector<GroundLabel> ground;
};

// Reads `C<name> <node1> <node2> <farads>` statements. Comment lines ('*',
// including '*|' cards), dot cards and non-capacitor elements are ignored;
// '+' continues a capacitor statement. A statement with a reference node on
// either side is a ground label, otherwise a coupling label.
LabelSet parse_labels(std::string_view text, const LabelOptions& options = {});

std::vector<CouplingLabel> parse_coupling_labels(std::string_view text, const LabelOptions& options = {});
std::vector<GroundLabel> parse_ground_labels(std::string_view text, const LabelOptions& options = {});

// Strips the last ":<suffix>" of an endpoint: the parent net of an RC-network
// subnode such as "a:1". Callers try the full name (a pin path like "m1:g")
// first and fall back to this.
std::string parent_node(const std::string& endpoint);

}  // namespace cirgps
