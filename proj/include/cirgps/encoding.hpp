#pragma once

#include <vector>

#include "cirgps/subgraph.hpp"

namespace cirgps {

// Hop distances from every local node to both anchors: one BFS per anchor over
// all edge types. Node-task subgraphs (m == n) get two identical columns.
DspdTable compute_dspd(const EnclosingSubgraph& sg);
DspdTable compute_dspd(const EnclosingSubgraph& sg, const LocalAdjacency& adj);

// Single-source hop distances; kUnreachable for nodes outside the component.
std::vector<int> bfs_distances(const LocalAdjacency& adj, int source);

// Double-radius node labeling: 1 + min(dm, dn) + (d/2) * ((d/2) + (d%2) - 1)
// with d = dm + dn. Anchors are 1, nodes unreachable from an anchor are 0.
int drnl_label(int dm, int dn);
std::vector<int> compute_drnl(const EnclosingSubgraph& sg);

// Bounds the distance vocabulary: finite d -> min(d, max_d), unreachable ->
// max_d + 1. Vocabulary size is max_d + 2.
DspdTable clamp_distances(const DspdTable& table, int max_d);

inline int dspd_vocabulary(int max_d) { return max_d + 2; }

}  // namespace cirgps
