#include "cirgps/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include <fmt/format.h>

#include "cirgps/rng.hpp"

namespace cirgps {

nlohmann::json SynthConfig::to_json() const {
  return {{"cells", cells},
          {"family", family},
          {"inputs", inputs},
          {"locality", locality},
          {"radius_net_net", radius_net_net},
          {"radius_pin_net", radius_pin_net},
          {"radius_pin_pin", radius_pin_pin},
          {"pin_keep", pin_keep},
          {"decay", decay},
          {"noise", noise}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.cells = j.value("cells", c.cells);
  c.family = j.value("family", c.family);
  c.inputs = j.value("inputs", c.inputs);
  c.locality = j.value("locality", c.locality);
  c.radius_net_net = j.value("radius_net_net", c.radius_net_net);
  c.radius_pin_net = j.value("radius_pin_net", c.radius_pin_net);
  c.radius_pin_pin = j.value("radius_pin_pin", c.radius_pin_pin);
  c.pin_keep = j.value("pin_keep", c.pin_keep);
  c.decay = j.value("decay", c.decay);
  c.noise = j.value("noise", c.noise);
  return c;
}

namespace {

constexpr const char* kLibrary = R"(.subckt inv_x1 a y vdd gnd
mp y a vdd vdd pch w=0.4u l=0.03u
mn y a gnd gnd nch w=0.2u l=0.03u
.ends inv_x1
.subckt inv_x2 a y vdd gnd
mp y a vdd vdd pch w=0.8u l=0.03u
mn y a gnd gnd nch w=0.4u l=0.03u
.ends inv_x2
.subckt inv_x4 a y vdd gnd
mp y a vdd vdd pch w=1.6u l=0.03u nf=2
mn y a gnd gnd nch w=0.8u l=0.03u nf=2
.ends inv_x4
.subckt nand2_x1 a b y vdd gnd
mp1 y a vdd vdd pch w=0.4u l=0.03u
mp2 y b vdd vdd pch w=0.4u l=0.03u
mn1 y a mid gnd nch w=0.4u l=0.03u
mn2 mid b gnd gnd nch w=0.4u l=0.03u
.ends nand2_x1
.subckt nor2_x1 a b y vdd gnd
mp1 mid a vdd vdd pch w=0.8u l=0.03u
mp2 y b mid vdd pch w=0.8u l=0.03u
mn1 y a gnd gnd nch w=0.2u l=0.03u
mn2 y b gnd gnd nch w=0.2u l=0.03u
.ends nor2_x1
.subckt buf_x1 a y vdd gnd
x1 a m vdd gnd inv_x1
x2 m y vdd gnd inv_x2
.ends buf_x1
.subckt bit6t bl blb wl vdd gnd
mp1 q qb vdd vdd pch w=0.1u l=0.04u
mn1 q qb gnd gnd nch w=0.2u l=0.04u
mp2 qb q vdd vdd pch w=0.1u l=0.04u
mn2 qb q gnd gnd nch w=0.2u l=0.04u
ma bl wl q gnd nch w=0.15u l=0.04u
mb blb wl qb gnd nch w=0.15u l=0.04u
.ends bit6t
)";

struct Builder {
  Builder(Rng& r, const SynthConfig& c) : rng(r), cfg(c) {}

  Rng& rng;
  const SynthConfig& cfg;
  std::string body;
  std::vector<std::pair<std::string, int>> driven;  // net, slot
  std::map<std::string, int> slot_of;               // top-level instance -> slot
  int next_net = 0;
  int slot = 0;

  std::string fresh_net() { return fmt::format("n{}", next_net++); }

  std::string pick_input() {
    std::vector<const std::string*> near;
    for (const auto& [net, s] : driven) {
      if (s >= slot - cfg.locality) near.push_back(&net);
    }
    if (near.empty()) return fmt::format("in{}", rng.below(static_cast<std::uint64_t>(cfg.inputs)));
    return *near[rng.below(near.size())];
  }

  void gate(const std::string& cell, int n_inputs) {
    std::vector<std::string> ins;
    for (int k = 0; k < n_inputs; ++k) ins.push_back(pick_input());
    const std::string out = fresh_net();
    const std::string name = fmt::format("x{}", slot);
    body += name;
    for (const auto& in : ins) body += " " + in;
    body += fmt::format(" {} vdd gnd {}\n", out, cell);
    slot_of[name] = slot;
    driven.emplace_back(out, slot);
    ++slot;
  }

  void logic_cell() {
    const double u = rng.uniform();
    if (u < 0.2) gate("inv_x1", 1);
    else if (u < 0.32) gate("inv_x2", 1);
    else if (u < 0.4) gate("inv_x4", 1);
    else if (u < 0.62) gate("nand2_x1", 2);
    else if (u < 0.82) gate("nor2_x1", 2);
    else gate("buf_x1", 1);
  }

  void passive() {
    const std::string a = pick_input();
    const std::string name_r = fmt::format("r{}", slot);
    if (rng.uniform() < 0.5) {
      const std::string out = fresh_net();
      body += fmt::format("{} {} {} {}k w=0.{}u l={}u\n", name_r, a, out, 1 + rng.below(9), 2 + rng.below(6),
                          1 + rng.below(4));
      driven.emplace_back(out, slot);
      slot_of[name_r] = slot;
    } else {
      const std::string name_c = fmt::format("c{}", slot);
      const std::string b = rng.uniform() < 0.5 ? std::string("gnd") : pick_input();
      if (b == a) return passive_ground(name_c, a);
      body += fmt::format("{} {} {} {}f w={}u l={}u nf={}\n", name_c, a, b, 1 + rng.below(20), 1 + rng.below(3),
                          1 + rng.below(3), 1 + rng.below(4));
      slot_of[name_c] = slot;
    }
    ++slot;
  }

  void passive_ground(const std::string& name, const std::string& a) {
    body += fmt::format("{} {} gnd {}f w=1u l=1u\n", name, a, 1 + rng.below(20));
    slot_of[name] = slot;
    ++slot;
  }

  // Four bit cells on one bit-line pair, word lines from nearby drivers, and
  // an inverter sensing each bit line.
  void memory_column() {
    const std::string bl = fresh_net();
    const std::string blb = fresh_net();
    for (int r = 0; r < 4 && slot < cfg.cells; ++r) {
      if (rng.uniform() < 0.5) gate("inv_x2", 1);  // word-line driver
      if (slot >= cfg.cells) break;
      const std::string name = fmt::format("x{}", slot);
      body += fmt::format("{} {} {} {} vdd gnd bit6t\n", name, bl, blb, pick_input());
      slot_of[name] = slot;
      ++slot;
    }
    for (const auto& line : {bl, blb}) {
      if (slot >= cfg.cells) break;
      const std::string out = fresh_net();
      const std::string name = fmt::format("x{}", slot);
      body += fmt::format("{} {} {} vdd gnd inv_x1\n", name, line, out);
      slot_of[name] = slot;
      driven.emplace_back(out, slot);
      ++slot;
    }
  }
};

bool is_supply(const std::string& net) { return net == "vdd" || net == "gnd"; }

std::string top_instance(const std::string& path) { return path.substr(0, path.find('/')); }

struct Entity {
  bool is_pin = false;
  int index = 0;  // pin record or net index
  int net = 0;    // own net (nets) or connected net (pins)
  double pos = 0.0;
};

}  // namespace

SynthCircuit generate_synthetic_circuit(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.cells < 4 || cfg.inputs < 1 || cfg.locality < 1) throw std::invalid_argument("synthetic circuit too small");
  if (cfg.family < 0 || cfg.family > 2) throw std::invalid_argument("synthetic family must be 0, 1 or 2");
  Rng rng(mix_seed(seed, 0x5359));
  Builder b(rng, cfg);
  while (b.slot < cfg.cells) {
    switch (cfg.family) {
      case 0: b.logic_cell(); break;
      case 1:
        if (rng.uniform() < 0.5) b.memory_column();
        else b.logic_cell();
        break;
      default:
        if (rng.uniform() < 0.3) b.passive();
        else b.logic_cell();
        break;
    }
  }

  SynthCircuit out;
  out.netlist_text = fmt::format("* synthetic design, family {}, seed {}\n", cfg.family, seed) + kLibrary + b.body +
                     ".end\n";
  out.netlist = parse_netlist(out.netlist_text);
  out.flat = flatten(out.netlist);
  const auto& flat = out.flat;

  // Row coordinates.
  std::vector<double> pin_pos(flat.pins.size());
  std::vector<double> net_sum(flat.nets.size(), 0.0);
  std::vector<int> net_pins(flat.nets.size(), 0);
  std::vector<double> net_width(flat.nets.size(), 0.0);
  for (std::size_t p = 0; p < flat.pins.size(); ++p) {
    const auto& pin = flat.pins[p];
    const auto& dev = flat.devices[pin.device];
    pin_pos[p] = b.slot_of.at(top_instance(dev.path)) + rng.uniform(-0.3, 0.3);
    net_sum[pin.net] += pin_pos[p];
    net_pins[pin.net] += 1;
    const auto w = dev.params.find("w");
    if (w != dev.params.end()) net_width[pin.net] += w->second;
  }

  std::vector<Entity> entities;
  for (std::size_t n = 0; n < flat.nets.size(); ++n) {
    if (is_supply(flat.nets[n].path) || net_pins[n] == 0) continue;
    entities.push_back({false, static_cast<int>(n), static_cast<int>(n), net_sum[n] / net_pins[n]});
  }
  for (std::size_t p = 0; p < flat.pins.size(); ++p) {
    const int net = flat.pins[p].net;
    if (is_supply(flat.nets[net].path)) continue;
    entities.push_back({true, static_cast<int>(p), net, pin_pos[p]});
  }
  std::stable_sort(entities.begin(), entities.end(), [](const Entity& x, const Entity& y) { return x.pos < y.pos; });

  auto name_of = [&](const Entity& e) { return e.is_pin ? flat.pin_path(flat.pins[e.index]) : flat.nets[e.index].path; };
  const double reach = std::max({cfg.radius_net_net, cfg.radius_pin_net, cfg.radius_pin_pin});
  std::string labels = "* coupling capacitance\n";
  int count = 0;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    for (std::size_t j = i + 1; j < entities.size() && entities[j].pos - entities[i].pos <= reach; ++j) {
      const Entity& a = entities[i];
      const Entity& c = entities[j];
      const double d = c.pos - a.pos;
      double radius = 0.0;
      double kind = 0.0;
      int fanout = 0;
      if (!a.is_pin && !c.is_pin) {
        radius = cfg.radius_net_net;
        kind = 1.0;
        fanout = net_pins[a.net] + net_pins[c.net];
      } else if (a.is_pin != c.is_pin) {
        if (a.net == c.net) continue;  // a pin is wired to its own net
        radius = cfg.radius_pin_net;
        kind = 0.1;
        fanout = net_pins[a.is_pin ? c.net : a.net];
      } else {
        if (a.net == c.net) continue;
        radius = cfg.radius_pin_pin;
        kind = 0.02;
        fanout = net_pins[a.net] + net_pins[c.net];
      }
      if (d > radius) continue;
      if (a.is_pin || c.is_pin) {
        if (!rng.bernoulli(cfg.pin_keep)) continue;
      }
      const double cap = 1e-16 * kind * std::exp(-d / cfg.decay) * (1.0 + std::min(fanout, 16)) / 4.0 *
                         std::exp(cfg.noise * rng.normal());
      labels += fmt::format("cc{} {} {} {:.6e}\n", count++, name_of(a), name_of(c), cap);
    }
  }

  labels += "* ground capacitance\n";
  count = 0;
  for (const auto& e : entities) {
    double cap = 0.0;
    if (e.is_pin) {
      const auto& dev = flat.devices[flat.pins[e.index].device];
      const auto w = dev.params.find("w");
      const double w_um = w == dev.params.end() ? 0.5 : w->second * 1e6;
      cap = 2e-18 * (0.5 + w_um);
    } else {
      cap = 5e-18 * (1.0 + net_pins[e.net]) * (0.5 + net_width[e.net] * 1e6 / 4.0);
    }
    cap *= std::exp(cfg.noise * rng.normal());
    labels += fmt::format("cg{} {} gnd {:.6e}\n", count++, name_of(e), cap);
  }
  out.label_text = std::move(labels);
  out.labels = parse_labels(out.label_text);
  return out;
}

}  // namespace cirgps
