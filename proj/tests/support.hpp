#pragma once

// Shared fixtures and brute-force oracles for unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <set>
#include <vector>

#include <fmt/format.h>

#include "cirgps/autodiff.hpp"
#include "cirgps/encoding.hpp"
#include "cirgps/graph.hpp"
#include "cirgps/model.hpp"
#include "cirgps/rng.hpp"
#include "cirgps/subgraph.hpp"

namespace testsupport {

using cirgps::EnclosingSubgraph;
using cirgps::Rng;

#ifndef CIRGPS_TEST_DATA
#error "CIRGPS_TEST_DATA must point at tests/data"
#endif

inline std::filesystem::path fixture_path(const std::string& name) { return std::filesystem::path(CIRGPS_TEST_DATA) / name; }

inline std::string read_fixture(const std::string& name) {
  std::ifstream in(fixture_path(name), std::ios::binary);
  if (!in) throw std::runtime_error("missing fixture " + name);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline constexpr int kInf = 1 << 29;

// Floyd-Warshall over an unweighted undirected edge list; kInf when
// unreachable.
inline std::vector<std::vector<int>> all_pairs_distances(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::vector<int>> d(n, std::vector<int>(n, kInf));
  for (int i = 0; i < n; ++i) d[i][i] = 0;
  for (auto [a, b] : edges) {
    if (a != b) d[a][b] = d[b][a] = 1;
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

// Random typed subgraph with n nodes, anchors 0 and 1 (or 0 and 0), valid pin
// codes and stats already in [0, 1].
inline EnclosingSubgraph random_subgraph(Rng& rng, int n, bool node_task = false, double edge_p = 0.3) {
  EnclosingSubgraph sg;
  for (int i = 0; i < n; ++i) {
    sg.nodes.push_back(i);
    sg.names.push_back("n" + std::to_string(i));
    sg.node_types.push_back(static_cast<cirgps::NodeType>(rng.below(3)));
  }
  std::set<std::pair<int, int>> seen;
  // A spanning path keeps most nodes reachable; extra edges add cycles.
  for (int i = 1; i < n; ++i) {
    if (rng.uniform() < 0.85) seen.insert({static_cast<int>(rng.below(static_cast<std::uint64_t>(i))), i});
  }
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (rng.uniform() < edge_p / n * 3) seen.insert({a, b});
    }
  }
  for (const auto& [a, b] : seen) {
    sg.edges.push_back({a, b, static_cast<cirgps::EdgeType>(rng.below(5))});
  }
  sg.stats = cirgps::StatsMatrix::Zero(n, cirgps::kStatsDim);
  for (int i = 0; i < n; ++i) {
    if (sg.node_types[i] == cirgps::NodeType::Pin) {
      sg.stats(i, 0) = static_cast<double>(rng.below(cirgps::kNumPinCodes));
    } else {
      for (int j = 0; j < cirgps::kStatsDim; ++j) sg.stats(i, j) = rng.uniform();
    }
  }
  sg.anchor_m = 0;
  sg.anchor_n = node_task || n < 2 ? 0 : 1;
  sg.link_type = node_task ? -1 : 0;
  sg.label = rng.uniform() < 0.5 ? 1.0 : 0.0;
  sg.dspd = cirgps::compute_dspd(sg);
  return sg;
}

// Relabels local nodes with perm (new index of old node i is perm[i]).
inline EnclosingSubgraph permute(const EnclosingSubgraph& sg, const std::vector<int>& perm) {
  const auto n = sg.num_nodes();
  EnclosingSubgraph out = sg;
  out.stats.resize(static_cast<Eigen::Index>(n), sg.stats.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = static_cast<std::size_t>(perm[i]);
    out.nodes[j] = sg.nodes[i];
    out.names[j] = sg.names[i];
    out.node_types[j] = sg.node_types[i];
    out.stats.row(static_cast<Eigen::Index>(j)) = sg.stats.row(static_cast<Eigen::Index>(i));
  }
  for (auto& e : out.edges) {
    e.src = perm[e.src];
    e.dst = perm[e.dst];
  }
  out.anchor_m = perm[sg.anchor_m];
  out.anchor_n = perm[sg.anchor_n];
  out.dspd = cirgps::compute_dspd(out);
  return out;
}

// Plain adjacency-matrix BFS, independent of LocalAdjacency.
inline std::vector<int> brute_bfs(int n, const std::vector<std::pair<int, int>>& edges, int src) {
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  for (const auto& [a, b] : edges) adj[a][b] = adj[b][a] = 1;
  std::vector<int> dist(n, -1);
  std::deque<int> q{src};
  dist[src] = 0;
  while (!q.empty()) {
    const int u = q.front();
    q.pop_front();
    for (int v = 0; v < n; ++v) {
      if (adj[u][v] && dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push_back(v);
      }
    }
  }
  return dist;
}

struct GradCheck {
  std::string name;
  double rel_error = 0.0;
};

// Compares reverse-mode gradients of `loss` against central differences for
// every learnable tensor. loss builds a scalar on the given tape.
template <typename LossFn>
std::vector<GradCheck> check_gradients(cirgps::GpsModel& model, LossFn loss, double eps = 1e-5) {
  model.zero_grad();
  {
    cirgps::ad::Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<GradCheck> out;
  for (auto* p : model.parameters()) {
    if (p->buffer || !p->trainable) continue;
    cirgps::ad::Matrix numeric(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + eps;
      cirgps::ad::Tape t1;
      const double up = loss(t1).value()(0, 0);
      p->value.data()[i] = saved - eps;
      cirgps::ad::Tape t2;
      const double down = loss(t2).value()(0, 0);
      p->value.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2 * eps);
    }
    const double diff = (numeric - p->grad).norm();
    // Some tensors have an identically zero gradient (key biases under
    // softmax, biases feeding a batch norm); the floor keeps their ratio
    // from measuring pure difference noise.
    const double scale = std::max({numeric.norm(), p->grad.norm(), 1e-6});
    out.push_back({p->name, diff / scale});
  }
  return out;
}

}  // namespace testsupport
