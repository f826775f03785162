#include "cirgps/encoding.hpp"

#include <algorithm>
#include <stdexcept>

namespace cirgps {

bool EnclosingSubgraph::operator==(const EnclosingSubgraph& o) const {
  const bool same_stats = stats.rows() == o.stats.rows() && stats.cols() == o.stats.cols() && stats == o.stats;
  return same_stats && nodes == o.nodes && names == o.names && node_types == o.node_types && edges == o.edges &&
         anchor_m == o.anchor_m && anchor_n == o.anchor_n && hops == o.hops && link_type == o.link_type &&
         polarity == o.polarity && label == o.label && target == o.target && truncated == o.truncated &&
         dspd == o.dspd;
}

LocalAdjacency::LocalAdjacency(const EnclosingSubgraph& sg) {
  const auto n = sg.num_nodes();
  offsets.assign(n + 1, 0);
  for (const auto& e : sg.edges) {
    ++offsets[e.src + 1];
    ++offsets[e.dst + 1];
  }
  for (std::size_t i = 0; i < n; ++i) offsets[i + 1] += offsets[i];
  targets.resize(static_cast<std::size_t>(offsets[n]));
  std::vector<int> fill(offsets.begin(), offsets.end() - 1);
  for (const auto& e : sg.edges) {
    targets[fill[e.src]++] = e.dst;
    targets[fill[e.dst]++] = e.src;
  }
}

std::vector<int> bfs_distances(const LocalAdjacency& adj, int source) {
  const auto n = adj.offsets.size() - 1;
  std::vector<int> dist(n, kUnreachable);
  std::vector<int> queue;
  queue.reserve(n);
  dist[source] = 0;
  queue.push_back(source);
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const int u = queue[head];
    for (int k = adj.offsets[u]; k < adj.offsets[u + 1]; ++k) {
      const int v = adj.targets[k];
      if (dist[v] == kUnreachable) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

DspdTable compute_dspd(const EnclosingSubgraph& sg, const LocalAdjacency& adj) {
  DspdTable table;
  const auto n = sg.num_nodes();
  table.rows.resize(n);
  if (n == 0) return table;
  const auto dm = bfs_distances(adj, sg.anchor_m);
  const auto dn = sg.anchor_n == sg.anchor_m ? dm : bfs_distances(adj, sg.anchor_n);
  for (std::size_t i = 0; i < n; ++i) table.rows[i] = {dm[i], dn[i]};
  return table;
}

DspdTable compute_dspd(const EnclosingSubgraph& sg) { return compute_dspd(sg, LocalAdjacency(sg)); }

int drnl_label(int dm, int dn) {
  if (dm == kUnreachable || dn == kUnreachable) return 0;
  if (dm == 0 || dn == 0) return 1;
  const int d = dm + dn;
  const int half = d / 2;
  return 1 + std::min(dm, dn) + half * (half + d % 2 - 1);
}

std::vector<int> compute_drnl(const EnclosingSubgraph& sg) {
  if (sg.is_node_task()) throw std::invalid_argument("DRNL needs two distinct anchors");
  const auto table = sg.dspd.size() == sg.num_nodes() ? sg.dspd : compute_dspd(sg);
  std::vector<int> labels(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) labels[i] = drnl_label(table.rows[i][0], table.rows[i][1]);
  return labels;
}

DspdTable clamp_distances(const DspdTable& table, int max_d) {
  if (max_d < 1) throw std::invalid_argument("max_d must be at least 1");
  DspdTable out = table;
  for (auto& row : out.rows) {
    for (auto& d : row) d = d == kUnreachable ? max_d + 1 : std::min(d, max_d);
  }
  return out;
}

}  // namespace cirgps
