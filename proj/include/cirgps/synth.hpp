#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "cirgps/labels.hpp"
#include "cirgps/netlist.hpp"

namespace cirgps {

// Desk-scale stand-in for a post-layout design. Cells are placed on a row in
// instantiation order; a cell's inputs come from nets driven within
// `locality` cells before it.
//
// Ground-truth coupling rule. Every non-supply net and every pin on a
// non-supply net gets a row coordinate (pins: their cell's slot plus jitter;
// nets: mean over their pins). Two entities that are not already connected
// couple when their distance d is within the radius of their pair kind
// (net-net, pin-net, pin-pin); pin pairs are additionally thinned with
// probability 1 - pin_keep. The capacitance is
//   c = 1e-16 F * kind_factor * exp(-d / decay) * (1 + min(fanout, 16)) / 4 * exp(noise * N(0,1))
// with kind_factor 1, 0.1, 0.02 and fanout the pin count of the nets involved.
// Ground capacitance of a net grows with its pin count and total gate width,
// that of a pin with its device width.
struct SynthConfig {
  int cells = 80;
  // 0 logic gates, 1 memory columns with sense inverters, 2 mixed logic and
  // passives.
  int family = 0;
  int inputs = 4;
  int locality = 4;
  double radius_net_net = 2.5;
  double radius_pin_net = 1.5;
  double radius_pin_pin = 1.0;
  double pin_keep = 0.5;
  double decay = 1.0;
  double noise = 0.25;

  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct SynthCircuit {
  std::string netlist_text;
  std::string label_text;  // capacitor statements, readable by parse_labels
  Netlist netlist;
  FlatCircuit flat;
  LabelSet labels;
};

SynthCircuit generate_synthetic_circuit(const SynthConfig& cfg, std::uint64_t seed);

}  // namespace cirgps
