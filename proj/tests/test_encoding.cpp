#include <doctest.h>

#include <numeric>

#include "support.hpp"

using namespace cirgps;

namespace {

EnclosingSubgraph path_graph() {
  // a - m - n - b, local order m, n, a, b
  EnclosingSubgraph sg;
  sg.nodes = {0, 1, 2, 3};
  sg.names = {"m", "n", "a", "b"};
  sg.node_types.assign(4, NodeType::Net);
  sg.edges = {{2, 0, EdgeType::NetNet}, {0, 1, EdgeType::NetNet}, {1, 3, EdgeType::NetNet}};
  sg.anchor_m = 0;
  sg.anchor_n = 1;
  return sg;
}

std::vector<std::pair<int, int>> edge_pairs(const EnclosingSubgraph& sg) {
  std::vector<std::pair<int, int>> out;
  for (const auto& e : sg.edges) out.emplace_back(e.src, e.dst);
  return out;
}

}  // namespace

TEST_CASE("dspd on a path") {
  const auto t = compute_dspd(path_graph());
  using R = std::array<int, 2>;
  CHECK(t.rows[2] == R{1, 2});  // a
  CHECK(t.rows[0] == R{0, 1});  // m
  CHECK(t.rows[1] == R{1, 0});  // n
  CHECK(t.rows[3] == R{2, 1});  // b
}

TEST_CASE("node task on a star has identical columns") {
  EnclosingSubgraph sg;
  const int leaves = 5;
  for (int i = 0; i <= leaves; ++i) {
    sg.nodes.push_back(i);
    sg.names.push_back(std::to_string(i));
    sg.node_types.push_back(NodeType::Net);
    if (i > 0) sg.edges.push_back({0, i, EdgeType::NetNet});
  }
  sg.anchor_m = sg.anchor_n = 0;
  const auto t = compute_dspd(sg);
  CHECK(t.rows[0] == std::array<int, 2>{0, 0});
  for (int i = 1; i <= leaves; ++i) CHECK(t.rows[i] == std::array<int, 2>{1, 1});
}

TEST_CASE("dspd matches all-pairs distances on random subgraphs") {
  Rng rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(59));
    const bool node_task = rng.bernoulli(0.2);
    auto sg = testsupport::random_subgraph(rng, n, node_task, rng.uniform(0.05, 0.6));
    // Move the anchors off 0/1 now and then.
    if (!node_task && rng.bernoulli(0.5)) {
      sg.anchor_m = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      do {
        sg.anchor_n = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      } while (sg.anchor_n == sg.anchor_m);
    }
    const auto d = testsupport::all_pairs_distances(n, edge_pairs(sg));
    const auto t = compute_dspd(sg);
    REQUIRE(t.size() == static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const int dm = d[sg.anchor_m][i] >= testsupport::kInf ? kUnreachable : d[sg.anchor_m][i];
      const int dn = d[sg.anchor_n][i] >= testsupport::kInf ? kUnreachable : d[sg.anchor_n][i];
      REQUIRE(t.rows[i] == std::array<int, 2>{dm, dn});
    }
  }
}

TEST_CASE("swapping anchors swaps the columns") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    auto sg = testsupport::random_subgraph(rng, 3 + static_cast<int>(rng.below(20)));
    const auto t = compute_dspd(sg);
    std::swap(sg.anchor_m, sg.anchor_n);
    const auto s = compute_dspd(sg);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(s.rows[i] == std::array<int, 2>{t.rows[i][1], t.rows[i][0]});
  }
}

TEST_CASE("dspd follows a relabeling of non-anchor nodes") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(20));
    const auto sg = testsupport::random_subgraph(rng, n);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> tail(perm.begin() + 2, perm.end());
    rng.shuffle(std::span<int>(tail));
    std::copy(tail.begin(), tail.end(), perm.begin() + 2);
    const auto p = testsupport::permute(sg, perm);
    const auto a = compute_dspd(sg);
    const auto b = compute_dspd(p);
    for (int i = 0; i < n; ++i) CHECK(b.rows[perm[i]] == a.rows[i]);
  }
}

TEST_CASE("dspd bounds with an injected target edge") {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    auto sg = testsupport::random_subgraph(rng, 2 + static_cast<int>(rng.below(30)));
    sg.edges.push_back({0, 1, EdgeType::NetNet});
    const auto t = compute_dspd(sg);
    CHECK(t.rows[0] == std::array<int, 2>{0, 1});
    CHECK(t.rows[1] == std::array<int, 2>{1, 0});
    for (const auto& r : t.rows) {
      // With the anchors adjacent the two distances differ by at most one and
      // are reachable together.
      CHECK((r[0] == kUnreachable) == (r[1] == kUnreachable));
      if (r[0] != kUnreachable) CHECK(std::abs(r[0] - r[1]) <= 1);
    }
  }
}

TEST_CASE("bfs distances") {
  const auto sg = path_graph();
  const LocalAdjacency adj(sg);
  CHECK(bfs_distances(adj, 2) == std::vector<int>{1, 2, 0, 3});
  CHECK(adj.degree(0) == 2);
}

TEST_CASE("drnl labels") {
  CHECK(drnl_label(0, 1) == 1);
  CHECK(drnl_label(1, 0) == 1);
  CHECK(drnl_label(1, 1) == 2);
  CHECK(drnl_label(1, 2) == 3);
  CHECK(drnl_label(2, 1) == 3);
  CHECK(drnl_label(kUnreachable, 3) == 0);
  // Hash formula evaluated independently over a grid.
  for (int a = 1; a < 8; ++a) {
    for (int b = 1; b < 8; ++b) {
      const int d = a + b;
      CHECK(drnl_label(a, b) == 1 + std::min(a, b) + (d / 2) * ((d / 2) + (d % 2) - 1));
    }
  }
  const auto labels = compute_drnl(path_graph());
  CHECK(labels == std::vector<int>{1, 1, 3, 3});
}

TEST_CASE("clamping the distance vocabulary") {
  DspdTable t;
  t.rows = {{0, 7}, {kUnreachable, 2}, {4, 4}};
  const auto c = clamp_distances(t, 4);
  CHECK(c.rows[0] == std::array<int, 2>{0, 4});
  CHECK(c.rows[1] == std::array<int, 2>{5, 2});
  CHECK(c.rows[2] == std::array<int, 2>{4, 4});
  CHECK(dspd_vocabulary(4) == 6);
}
