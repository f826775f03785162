#include <doctest.h>

#include <set>

#include "cirgps/config.hpp"
#include "support.hpp"

using namespace cirgps;

TEST_CASE("synthetic circuits are deterministic and well formed") {
  SynthConfig cfg;
  cfg.cells = 50;
  const auto a = generate_synthetic_circuit(cfg, 7);
  const auto b = generate_synthetic_circuit(cfg, 7);
  CHECK(a.netlist_text == b.netlist_text);
  CHECK(a.label_text == b.label_text);
  CHECK(generate_synthetic_circuit(cfg, 8).label_text != a.label_text);

  // The text forms parse back to the same circuit.
  const auto flat = flatten(parse_netlist(a.netlist_text));
  CHECK(flat.devices.size() == a.flat.devices.size());
  CHECK(flat.nets.size() == a.flat.nets.size());
  const auto labels = parse_labels(a.label_text);
  CHECK(labels.coupling.size() == a.labels.coupling.size());
  CHECK(labels.ground.size() == a.labels.ground.size());

  const auto g = build_graph_with_stats(flat);
  CHECK(g.num_nodes() == flat.nets.size() + flat.devices.size() + flat.pins.size());
  std::vector<int> deg(g.num_nodes(), 0);
  for (const auto& e : g.edges()) {
    CHECK(g.node_type(e.src) != g.node_type(e.dst));
    deg[e.src]++, deg[e.dst]++;
  }
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    if (g.node_type(static_cast<int>(i)) == NodeType::Pin) CHECK(deg[i] == 2);
  }

  const auto m = match_labels(g, labels.coupling);
  CHECK(m.unresolved == 0);
  std::set<EdgeType> kinds;
  for (const auto& l : m.links) {
    kinds.insert(l.link_type);
    CHECK(*l.cap_target > 0.0);
  }
  CHECK(kinds == std::set<EdgeType>{EdgeType::PinNet, EdgeType::PinPin, EdgeType::NetNet});
  CHECK(!match_ground_labels(g, labels.ground).targets.empty());
}

TEST_CASE("every synthetic family builds") {
  for (int family = 0; family < 3; ++family) {
    SynthConfig cfg;
    cfg.cells = 30;
    cfg.family = family;
    const auto c = generate_synthetic_circuit(cfg, 1);
    CHECK(!c.flat.devices.empty());
    CHECK(!c.labels.coupling.empty());
  }
  SynthConfig bad;
  bad.family = 9;
  CHECK_THROWS(generate_synthetic_circuit(bad, 1));
}

TEST_CASE("config files, overrides and validation") {
  Config c;
  CHECK(c.str("run.task") == "link");
  c.load_text("# comment\n[data]\nhops = 2 ; trailing\n\n[train]\nepochs=7\n");
  CHECK(c.integer("data.hops") == 2);
  CHECK(c.train().epochs == 7);
  c.apply_override("optim.lr=0.5");
  CHECK(c.train().optim.lr == 0.5);
  c.apply_override("model.pe.trainable=off");
  CHECK_FALSE(c.model().pe_trainable);

  CHECK_THROWS_WITH_AS(c.load_text("[data]\nbogus = 1\n", "cfg.ini"), "cfg.ini:2: unknown config key 'data.bogus'",
                       ConfigError);
  CHECK_THROWS_AS(c.apply_override("nope.key=1"), ConfigError);
  CHECK_THROWS_AS(c.apply_override("data.hops"), ConfigError);
  c.set("data.hops", "x");
  CHECK_THROWS_AS(c.sample(), ConfigError);
  c.set("data.hops", "1");

  c.set("data.norm.lo", "1e-15");
  c.set("data.norm.hi", "1e-21");
  CHECK_THROWS_AS(c.sample(), ConfigError);
  c.set("data.norm.lo", "1e-21");
  c.set("data.norm.hi", "1e-15");
  CHECK(c.sample().normalizer.hi() == 1e-15);

  c.set("finetune.mode", "head");
  CHECK_THROWS_AS(c.finetune_mode(), ConfigError);
  c.set("finetune.checkpoint", "model.ckpt");
  CHECK(c.finetune_mode() == FreezeMode::HeadOnly);
  c.set("finetune.mode", "none");
  CHECK_FALSE(c.finetune_mode().has_value());

  Config again;
  again.load_text(c.dump());
  CHECK(again.dump() == c.dump());
}
