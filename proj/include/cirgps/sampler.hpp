#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cirgps/graph.hpp"
#include "cirgps/normalize.hpp"
#include "cirgps/subgraph.hpp"

namespace cirgps {

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kNegativeRetryBudget = 100;

// One negative per positive, same link type: the source of positive i is
// paired with the destination of another positive of that type. A random
// cyclic permutation is tried first; colliding pairs are redrawn up to
// kNegativeRetryBudget times. Negatives never coincide with a positive pair,
// with each other, or with an existing graph edge. Output index i is the
// negative drawn for positives[i].
std::vector<TargetLink> generate_negative_links(std::span<const TargetLink> positives, const CircuitGraph& g,
                                                std::uint64_t seed);

// Indices (sorted, per type) of a uniform sample of min-count items from
// every type. Throws if any count is zero.
std::vector<std::vector<std::size_t>> balanced_selection(std::span<const std::size_t> counts, std::uint64_t seed);

// Samples |smallest type| links from each of the three link types.
std::vector<TargetLink> balance_links(const std::map<EdgeType, std::vector<TargetLink>>& links_by_type,
                                      std::uint64_t seed);

struct ExtractOptions {
  int hops = 1;
  // BFS frontiers are subsampled uniformly once the node set would exceed
  // this size; anchors are always kept.
  std::size_t max_nodes = 2000;
  std::uint64_t seed = 0;
  // Leave out the link edge joining the two anchors (the target itself). The
  // node set is unaffected; only the edge list and distances change.
  bool drop_target_link = false;
};

// Induced subgraph on {i | d(i,m) <= h or d(i,n) <= h}, traversing every edge
// type. Local order: m, n, then remaining nodes by global index. Local edges
// follow global edge order. Fills stats rows from g.stats when present.
EnclosingSubgraph extract_enclosing_subgraph(const CircuitGraph& g, int m, int n, const ExtractOptions& options);

enum class Task { Link, EdgeRegression, NodeRegression };

std::string_view task_name(Task t);
Task task_from_name(std::string_view name);

struct SampleConfig {
  Task task = Task::Link;
  int hops = 1;
  double fraction = 1.0;
  std::array<double, 3> split_ratios = {0.9, 0.1, 0.0};
  std::uint64_t seed = 0;
  std::size_t max_subgraph_nodes = 2000;
  bool balance = true;
  // Hide each sample's own injected link from its subgraph.
  bool drop_target_link = false;
  int workers = 1;
  // Clamp bound for stored DSPD values is applied at model input, so the
  // dataset keeps raw distances.
  TargetNormalizer normalizer{};
};

enum class Split { Train = 0, Valid = 1, Test = 2 };
std::string_view split_name(Split s);

struct Sample {
  TargetLink link;  // for node tasks: a == b == anchor, link_type unused
  EnclosingSubgraph subgraph;
};

struct LinkDataset {
  Split split = Split::Train;
  std::uint64_t seed = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  std::vector<EnclosingSubgraph> subgraphs() const;
};

struct DatasetBundle {
  std::array<LinkDataset, 3> splits;
  nlohmann::json manifest;

  LinkDataset& operator[](Split s) { return splits[static_cast<std::size_t>(s)]; }
  const LinkDataset& operator[](Split s) const { return splits[static_cast<std::size_t>(s)]; }
};

// Link tasks: negatives -> per-type balance over (positive, negative) pairs ->
// per-type `fraction` subsample -> per-type split by pair -> inject every
// selected link -> parallel extraction -> DSPD. Regression labels are the
// normalized capacitance (out-of-range positives dropped beforehand).
DatasetBundle build_dataset(const CircuitGraph& g, std::span<const TargetLink> positives, const SampleConfig& cfg);

// Node regression: anchors m = n, no link injection.
DatasetBundle build_node_dataset(const CircuitGraph& g, std::span<const NodeTarget> targets, const SampleConfig& cfg);

// Record text of one subgraph: graph interchange block, then anchors, link,
// label, global ids, stats rows and the two DSPD columns.
std::string dump_subgraph(const EnclosingSubgraph& sg);
EnclosingSubgraph load_subgraph(std::string_view text);

// Writes <dir>/manifest.json and <dir>/<split>/<index>.sg.
void write_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle read_dataset(const std::filesystem::path& dir);

}  // namespace cirgps
