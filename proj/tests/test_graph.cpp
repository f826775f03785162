#include <doctest.h>

#include <map>
#include <set>

#include "support.hpp"

using namespace cirgps;

namespace {

CircuitGraph buffer_graph() {
  return build_graph_with_stats(flatten(parse_netlist(testsupport::read_fixture("buffer.sp"))));
}

// Flat netlist of random MOS / R / C devices over `nets` nets.
std::string random_circuit_text(Rng& rng, int devices, int nets) {
  std::string text;
  auto net = [&] { return fmt::format("n{}", rng.below(static_cast<std::uint64_t>(nets))); };
  for (int d = 0; d < devices; ++d) {
    switch (rng.below(3)) {
      case 0:
        text += fmt::format("m{} {} {} {} {} {} w={}e-7 l=3e-8\n", d, net(), net(), net(), net(),
                            rng.bernoulli(0.5) ? "nmos" : "pmos", 1 + rng.below(4));
        break;
      case 1: text += fmt::format("r{} {} {} 1k w=1e-7 l=1e-6\n", d, net(), net()); break;
      default: text += fmt::format("c{} {} {} 1f l=1e-6 nf=2\n", d, net(), net()); break;
    }
  }
  return text;
}

}  // namespace

TEST_CASE("buffer graph: N = 25 with 16 + 16 schematic edges") {
  const auto g = buffer_graph();
  CHECK(g.num_nodes() == 25);
  CHECK(g.num_edges() == 32);
  std::map<EdgeType, int> by_type;
  for (const auto& e : g.edges()) by_type[e.type]++;
  CHECK(by_type[EdgeType::DevicePin] == 16);
  CHECK(by_type[EdgeType::NetPin] == 16);
  std::map<NodeType, int> nodes;
  for (auto t : g.node_types()) nodes[t]++;
  CHECK(nodes[NodeType::Net] == 5);
  CHECK(nodes[NodeType::Device] == 4);
  CHECK(nodes[NodeType::Pin] == 16);
  CHECK(g.stats.rows() == 25);
  CHECK(g.stats.cols() == kStatsDim);
}

TEST_CASE("degenerate circuits") {
  const auto empty = build_graph(FlatCircuit{});
  CHECK(empty.num_nodes() == 0);
  CHECK(empty.num_edges() == 0);

  const auto g = build_graph(flatten(parse_netlist("r1 a b 1k\n")));
  CHECK(g.num_nodes() == 5);
  CHECK(g.num_edges() == 4);
}

TEST_CASE("pin structure and schematic bipartiteness on random circuits") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const auto flat = flatten(parse_netlist(random_circuit_text(rng, 1 + static_cast<int>(rng.below(12)), 6)));
    const auto g = build_graph(flat);
    std::vector<int> t0(g.num_nodes(), 0), t1(g.num_nodes(), 0);
    for (const auto& e : g.edges()) {
      CHECK(g.node_type(e.src) != g.node_type(e.dst));
      if (e.type == EdgeType::DevicePin) {
        CHECK((g.node_type(e.src) == NodeType::Device) != (g.node_type(e.dst) == NodeType::Device));
        t0[e.src]++, t0[e.dst]++;
      } else {
        REQUIRE(e.type == EdgeType::NetPin);
        CHECK((g.node_type(e.src) == NodeType::Net) != (g.node_type(e.dst) == NodeType::Net));
        t1[e.src]++, t1[e.dst]++;
      }
    }
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      if (g.node_type(static_cast<int>(i)) != NodeType::Pin) continue;
      CHECK(t0[i] == 1);
      CHECK(t1[i] == 1);
    }
  }
}

TEST_CASE("net statistics for a net driving two NMOS gates") {
  const auto flat = flatten(parse_netlist(
      "m1 o1 in 0 0 nmos w=1e-7 l=3e-8\n"
      "m2 o2 in 0 0 nmos w=1e-7 l=3e-8\n"
      "r1 lone lone2 1k w=1e-7 l=1e-6\n"));
  auto g = build_graph_with_stats(flat);
  const int in = *g.find("in");
  const auto row = g.stats.row(in);
  CHECK(row(0) == 2);
  CHECK(row(1) == 2);
  CHECK(row(2) == 0);
  CHECK(row(3) == 0);
  CHECK(row(4) == doctest::Approx(2e-7));
  CHECK(row(5) == doctest::Approx(6e-8));
  for (int k = 6; k < kStatsDim; ++k) CHECK(row(k) == 0);
}

TEST_CASE("isolated net and device rows") {
  // Nets only come into existence through a connection or a port, so the
  // isolated net here is an unconnected top-level port: every device-derived
  // dimension is zero and the port binding is its only count.
  const auto flat = flatten(parse_netlist(".subckt top a unused\nm1 a a 0 0 nmos w=1e-7 l=3e-8 m=2\n.ends\n"));
  const auto g = build_graph_with_stats(flat);
  const int unused = *g.find("unused");
  for (int k = 0; k < 12; ++k) CHECK(g.stats(unused, k) == 0);
  CHECK(g.stats(unused, 12) == 1);

  int device = -1;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    if (g.node_type(static_cast<int>(i)) == NodeType::Device) device = static_cast<int>(i);
  }
  REQUIRE(device >= 0);
  CHECK(g.stats(device, 0) == 2);
  CHECK(g.stats(device, 1) == doctest::Approx(3e-8));
  CHECK(g.stats(device, 2) == doctest::Approx(1e-7));
  CHECK(g.stats(device, 10) == 0);  // nmos
  // Device rows leave the trailing net-only dimensions empty.
  CHECK(g.stats(device, 11) == 0);
  CHECK(g.stats(device, 12) == 0);
}

TEST_CASE("missing geometry is counted") {
  std::size_t missing = 0;
  build_graph_with_stats(flatten(parse_netlist("m1 d g s b nmos w=1e-7\nr1 a b 1k\n")), &missing);
  CHECK(missing == 3);  // m1 l, r1 w and l
}

TEST_CASE("net transistor counts match a per-device brute force") {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const auto flat = flatten(parse_netlist(random_circuit_text(rng, 1 + static_cast<int>(rng.below(20)), 8)));
    const auto g = build_graph_with_stats(flat);
    double from_stats = 0.0;
    for (std::size_t n = 0; n < flat.nets.size(); ++n) from_stats += g.stats(static_cast<Eigen::Index>(n), 0);
    std::map<int, std::set<int>> nets_of_device;
    for (const auto& p : flat.pins) {
      if (is_transistor(flat.devices[p.device].type)) nets_of_device[p.device].insert(p.net);
    }
    double brute = 0.0;
    for (const auto& [d, s] : nets_of_device) brute += static_cast<double>(s.size());
    CHECK(from_stats == brute);
  }
}

TEST_CASE("pin codes") {
  const auto g = buffer_graph();
  const int gate = *g.find("mp1:g");
  const int drain = *g.find("mp1:d");
  const int source = *g.find("mp1:s");
  const int bulk = *g.find("mp1:b");
  CHECK(g.stats(gate, 0) == 0);
  CHECK(g.stats(drain, 0) == 1);
  CHECK(g.stats(source, 0) == 2);
  CHECK(g.stats(bulk, 0) == 3);
  const auto r = build_graph_with_stats(flatten(parse_netlist("r1 a b 1k w=1 l=1\n")));
  CHECK(r.stats(*r.find("r1:1"), 0) == 0);
  CHECK(r.stats(*r.find("r1:2"), 0) == 1);
}

TEST_CASE("link injection") {
  const auto g = buffer_graph();
  const int pin = *g.find("mp1:g");
  const int a = *g.find("a");
  const int z = *g.find("z");

  const auto same = inject_links(g, {});
  CHECK(same.edges() == g.edges());

  const std::vector<TargetLink> one{{pin, z, EdgeType::PinNet, Polarity::Positive, 1e-18}};
  const auto injected = inject_links(g, one);
  REQUIRE(injected.num_edges() == g.num_edges() + 1);
  CHECK(injected.edges().back() == Edge{pin, z, EdgeType::PinNet});
  CHECK(std::equal(g.edges().begin(), g.edges().end(), injected.edges().begin()));

  const std::vector<TargetLink> mismatch{{a, pin, EdgeType::NetNet, Polarity::Positive, {}}};
  CHECK_THROWS_AS(inject_links(g, mismatch), GraphError);
  CHECK_THROWS_AS(inject_links(injected, one), GraphError);
  const std::vector<TargetLink> twice{one[0], one[0]};
  CHECK_THROWS_AS(inject_links(g, twice), GraphError);
}

TEST_CASE("label matching derives link types") {
  const auto g = buffer_graph();
  const auto labels = parse_labels(testsupport::read_fixture("buffer.spf")).coupling;
  const auto m = match_labels(g, labels);
  CHECK(m.unresolved == 0);
  REQUIRE(m.links.size() == 4);
  std::map<std::pair<std::string, std::string>, TargetLink> by_names;
  for (const auto& l : m.links) by_names[{g.name(l.a), g.name(l.b)}] = l;
  CHECK(by_names.at({"a", "b"}).link_type == EdgeType::NetNet);
  // pin-net links are oriented (pin, net)
  CHECK(by_names.at({"mp1:g", "z"}).link_type == EdgeType::PinNet);
  CHECK(by_names.at({"mp1:g", "z"}).cap_target == 2e-18);
  // b:1 is a subnode of b
  CHECK(by_names.at({"b", "z"}).link_type == EdgeType::NetNet);
  CHECK(by_names.at({"mn1:d", "mp2:g"}).link_type == EdgeType::PinPin);
  for (const auto& l : m.links) CHECK(l.polarity == Polarity::Positive);

  const std::vector<CouplingLabel> unknown{{"nowhere", "a", 1e-18}};
  const auto skipped = match_labels(g, unknown);
  CHECK(skipped.links.empty());
  CHECK(skipped.unresolved == 1);
}

TEST_CASE("interchange dump is stable") {
  const auto g = buffer_graph();
  const std::string text = g.dump();
  const auto back = CircuitGraph::load(text);
  CHECK(back.dump() == text);
  CHECK(back.edges() == g.edges());
  CHECK(back.node_types() == g.node_types());
  CHECK(text.rfind("25 32\n", 0) == 0);
  CHECK(buffer_graph().dump() == text);
  const auto stats_back = load_stats(dump_stats(g.stats));
  CHECK(stats_back == g.stats);

  std::vector<TargetLink> links{{1, 2, EdgeType::NetNet, Polarity::Positive, 1.25e-18},
                                {20, 3, EdgeType::PinNet, Polarity::Negative, {}}};
  CHECK(load_links(dump_links(links)) == links);
}
