#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cirgps {

// Raised for malformed input. Line and column are 1-based; 0 means unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : std::runtime_error(format(what, line, column)), line_(line), column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t line, std::size_t column) {
    if (line == 0) return what;
    return std::to_string(line) + ":" + std::to_string(column) + ": " + what;
  }
  std::size_t line_;
  std::size_t column_;
};

// Structural errors found after parsing (missing definitions, cycles, ...).
class NetlistError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class InstanceKind { Mosfet, Resistor, Capacitor, Diode, SubcktRef };

struct Instance {
  std::string name;
  InstanceKind kind = InstanceKind::Mosfet;
  // Ordered (terminal, net) pairs. MOS: d g s b; two-terminal devices: 1 2;
  // subcircuit references: the referenced subcircuit's port names.
  std::vector<std::pair<std::string, std::string>> terminals;
  // MOS/diode model name, or the referenced subcircuit name.
  std::string model;
  // Primary value for R (ohms) and C (farads); 0 otherwise.
  double value = 0.0;
  std::map<std::string, double> params;

  bool operator==(const Instance&) const = default;
};

struct SubcktDef {
  std::string name;
  std::vector<std::string> ports;
  std::vector<Instance> instances;

  // Nets referenced by instances that are not ports, in first-use order.
  std::vector<std::string> internal_nets() const;

  bool operator==(const SubcktDef&) const = default;
};

// Statements outside any .subckt block are collected into this subcircuit.
inline constexpr std::string_view kImplicitTop = "top";

struct Netlist {
  // Definition order is kept so pretty-printing is stable.
  std::vector<SubcktDef> subcircuits;
  std::string top_name;

  const SubcktDef* find(std::string_view name) const;

  bool operator==(const Netlist&) const = default;
};

// Parses the SPICE subset:
//   .subckt <name> <ports...> / .ends [name] / .end
//   M<name> d g s b <model> w=<v> l=<v> [m=<v>] [nf=<v>]
//   R<name> a b <v> [w=<v> l=<v> m=<v>]
//   C<name> a b <v> [l=<v> nf=<v> m=<v>]
//   D<name> a b <model>
//   X<name> <nets...> <subckt>
// '*' starts a comment line, '+' continues the previous line. Identifiers are
// case-insensitive and normalized to lower case. Numbers accept SI suffixes
// f p n u m k.
Netlist parse_netlist(std::string_view text);

// Inverse of parse_netlist: the output re-parses to an equal Netlist.
std::string to_spice(const Netlist& netlist);

// Parses "1.5e-18", "10k", "0.2u" ... Returns false on malformed input.
bool parse_si_number(std::string_view token, double& out);

enum class DeviceType { Nmos = 0, Pmos = 1, Resistor = 2, Capacitor = 3, Diode = 4 };

std::string_view device_type_name(DeviceType t);
bool is_transistor(DeviceType t);

struct FlatDevice {
  std::string path;
  DeviceType type = DeviceType::Nmos;
  std::string model;
  double value = 0.0;
  std::map<std::string, double> params;
  // Terminal names in pin order; pin records reference these by position.
  std::vector<std::string> terminals;
};

struct FlatNet {
  std::string path;
  bool is_port = false;
  // Number of subcircuit port bindings (top-level ports included) that
  // resolve to this net.
  int port_count = 0;
};

struct PinRecord {
  int device = 0;
  int terminal = 0;  // index into FlatDevice::terminals
  int net = 0;
};

struct FlatCircuit {
  std::vector<FlatDevice> devices;
  std::vector<FlatNet> nets;
  std::vector<PinRecord> pins;

  std::string pin_path(const PinRecord& pin) const {
    return devices[pin.device].path + ":" + devices[pin.device].terminals[pin.terminal];
  }
};

// Expands the hierarchy under `top`. Device and net names become slash-joined
// instance paths; top-level nets keep their plain names, and the net "0" is
// global.
FlatCircuit flatten(const Netlist& netlist, std::string_view top);

inline FlatCircuit flatten(const Netlist& netlist) { return flatten(netlist, netlist.top_name); }

// Number of primitive instances reachable from `top`, counted by walking the
// instantiation tree without building the flat circuit.
std::size_t count_primitive_instances(const Netlist& netlist, std::string_view top);

}  // namespace cirgps
