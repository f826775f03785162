#include "cirgps/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "cirgps/encoding.hpp"
#include "cirgps/rng.hpp"
#include "cirgps/worker_pool.hpp"

namespace cirgps {
namespace {

constexpr std::array<EdgeType, 3> kLinkTypes = {EdgeType::PinNet, EdgeType::PinPin, EdgeType::NetNet};

std::uint64_t pair_key(int a, int b) {
  const auto [lo, hi] = std::minmax(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(lo)) << 32) | static_cast<std::uint32_t>(hi);
}

std::size_t type_slot(EdgeType t) {
  switch (t) {
    case EdgeType::PinNet: return 0;
    case EdgeType::PinPin: return 1;
    case EdgeType::NetNet: return 2;
    default: throw SamplingError("not a link type");
  }
}

// Uniform sample of k indices out of [0, n), returned sorted.
std::vector<std::size_t> sample_sorted(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::string_view task_name(Task t) {
  switch (t) {
    case Task::Link: return "link";
    case Task::EdgeRegression: return "edge_reg";
    case Task::NodeRegression: return "node_reg";
  }
  return "?";
}

Task task_from_name(std::string_view name) {
  if (name == "link") return Task::Link;
  if (name == "edge_reg") return Task::EdgeRegression;
  if (name == "node_reg") return Task::NodeRegression;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

std::vector<TargetLink> generate_negative_links(std::span<const TargetLink> positives, const CircuitGraph& g,
                                                std::uint64_t seed) {
  std::unordered_set<std::uint64_t> positive_pairs;
  std::array<std::vector<std::size_t>, 3> groups;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    positive_pairs.insert(pair_key(positives[i].a, positives[i].b));
    groups[type_slot(positives[i].link_type)].push_back(i);
  }
  std::vector<TargetLink> negatives(positives.size());
  std::unordered_set<std::uint64_t> used;
  Rng rng(seed);
  for (std::size_t slot = 0; slot < groups.size(); ++slot) {
    const auto& group = groups[slot];
    if (group.empty()) continue;
    if (group.size() < 2) {
      throw SamplingError(fmt::format("link type {} has a single positive; cannot permute endpoints",
                                      static_cast<int>(kLinkTypes[slot])));
    }
    const std::size_t k = group.size();
    // Sattolo's algorithm: a uniformly random single cycle, hence a derangement.
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = k - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i)]);

    const auto acceptable = [&](int a, int b) {
      if (a == b) return false;
      const auto key = pair_key(a, b);
      return positive_pairs.count(key) == 0 && used.count(key) == 0 && !g.has_edge(a, b);
    };
    for (std::size_t t = 0; t < k; ++t) {
      const TargetLink& pos = positives[group[t]];
      int dst = positives[group[perm[t]]].b;
      bool ok = acceptable(pos.a, dst);
      for (int attempt = 0; !ok && attempt < kNegativeRetryBudget; ++attempt) {
        std::size_t r = static_cast<std::size_t>(rng.below(k - 1));
        if (r >= t) ++r;
        dst = positives[group[r]].b;
        ok = acceptable(pos.a, dst);
      }
      if (!ok) {
        throw SamplingError(fmt::format("negative sampling exhausted {} retries for link ({}, {})",
                                        kNegativeRetryBudget, g.name(pos.a), g.name(pos.b)));
      }
      used.insert(pair_key(pos.a, dst));
      TargetLink neg;
      neg.a = pos.a;
      neg.b = dst;
      neg.link_type = pos.link_type;
      neg.polarity = Polarity::Negative;
      neg.cap_target = 0.0;
      negatives[group[t]] = neg;
    }
  }
  return negatives;
}

std::vector<std::vector<std::size_t>> balanced_selection(std::span<const std::size_t> counts, std::uint64_t seed) {
  if (counts.empty()) throw SamplingError("no link types to balance");
  const std::size_t target = *std::min_element(counts.begin(), counts.end());
  if (target == 0) throw SamplingError("cannot balance: a link type has no links");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t t = 0; t < counts.size(); ++t) {
    Rng rng(mix_seed(seed, t));
    out.push_back(sample_sorted(counts[t], target, rng));
  }
  return out;
}

std::vector<TargetLink> balance_links(const std::map<EdgeType, std::vector<TargetLink>>& links_by_type,
                                      std::uint64_t seed) {
  std::array<std::size_t, 3> counts{};
  for (std::size_t s = 0; s < kLinkTypes.size(); ++s) {
    const auto it = links_by_type.find(kLinkTypes[s]);
    counts[s] = it == links_by_type.end() ? 0 : it->second.size();
  }
  const auto selection = balanced_selection(counts, seed);
  std::vector<TargetLink> out;
  for (std::size_t s = 0; s < kLinkTypes.size(); ++s) {
    const auto& links = links_by_type.at(kLinkTypes[s]);
    for (auto i : selection[s]) out.push_back(links[i]);
  }
  return out;
}

EnclosingSubgraph extract_enclosing_subgraph(const CircuitGraph& g, int m, int n, const ExtractOptions& options) {
  if (options.hops < 1) throw std::invalid_argument("hop count must be at least 1");
  const int total = static_cast<int>(g.num_nodes());
  if (m < 0 || n < 0 || m >= total || n >= total) throw std::out_of_range("anchor out of range");

  std::vector<int> selected = {m};
  if (n != m) selected.push_back(n);
  std::unordered_set<int> visited(selected.begin(), selected.end());
  std::vector<int> frontier = selected;
  std::size_t truncated = 0;
  const std::size_t cap = std::max<std::size_t>(options.max_nodes, selected.size());
  for (int depth = 1; depth <= options.hops && !frontier.empty(); ++depth) {
    std::vector<int> next;
    for (int u : frontier) {
      for (const auto& nb : g.neighbors(u)) {
        if (visited.insert(nb.node).second) next.push_back(nb.node);
      }
    }
    std::sort(next.begin(), next.end());
    if (selected.size() + next.size() > cap) {
      Rng rng(mix_seed(mix_seed(options.seed, pair_key(m, n)), static_cast<std::uint64_t>(options.hops)));
      const std::size_t keep = cap - selected.size();
      const auto chosen = sample_sorted(next.size(), keep, rng);
      truncated += next.size() - chosen.size();
      for (auto i : chosen) selected.push_back(next[i]);
      break;
    }
    selected.insert(selected.end(), next.begin(), next.end());
    frontier = std::move(next);
  }

  EnclosingSubgraph sg;
  sg.hops = options.hops;
  sg.truncated = truncated;
  // Anchors first, then the rest by global id.
  std::sort(selected.begin() + (n != m ? 2 : 1), selected.end());
  sg.nodes = selected;
  sg.anchor_m = 0;
  sg.anchor_n = n != m ? 1 : 0;
  std::unordered_map<int, int> local;
  local.reserve(selected.size() * 2);
  for (std::size_t i = 0; i < selected.size(); ++i) local.emplace(selected[i], static_cast<int>(i));

  std::vector<int> edge_ids;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    for (const auto& nb : g.neighbors(selected[i])) {
      const auto it = local.find(nb.node);
      if (it != local.end() && it->second > static_cast<int>(i)) edge_ids.push_back(nb.edge);
    }
  }
  if (options.drop_target_link && m != n) {
    std::erase_if(edge_ids, [&](int id) {
      const auto& e = g.edges()[id];
      return is_link_type(e.type) && ((e.src == m && e.dst == n) || (e.src == n && e.dst == m));
    });
  }
  std::sort(edge_ids.begin(), edge_ids.end());
  sg.edges.reserve(edge_ids.size());
  for (int id : edge_ids) {
    const auto& e = g.edges()[id];
    sg.edges.push_back({local.at(e.src), local.at(e.dst), e.type});
  }
  sg.names.reserve(selected.size());
  sg.node_types.reserve(selected.size());
  for (int v : selected) {
    sg.names.push_back(g.name(v));
    sg.node_types.push_back(g.node_type(v));
  }
  sg.stats = StatsMatrix::Zero(static_cast<Eigen::Index>(selected.size()), kStatsDim);
  if (g.stats.rows() == static_cast<Eigen::Index>(g.num_nodes())) {
    for (std::size_t i = 0; i < selected.size(); ++i) sg.stats.row(static_cast<Eigen::Index>(i)) = g.stats.row(selected[i]);
  }
  return sg;
}

std::vector<EnclosingSubgraph> LinkDataset::subgraphs() const {
  std::vector<EnclosingSubgraph> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.subgraph);
  return out;
}

namespace {

struct Job {
  Split split;
  std::size_t index;
};

std::array<std::size_t, 3> split_counts(std::size_t k, const std::array<double, 3>& ratios) {
  const auto train = std::min(k, static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(k))));
  const auto valid = std::min(k - train, static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(k))));
  return {train, valid, k - train - valid};
}

void check_ratios(const SampleConfig& cfg) {
  const double sum = cfg.split_ratios[0] + cfg.split_ratios[1] + cfg.split_ratios[2];
  if (std::abs(sum - 1.0) > 1e-9 || *std::min_element(cfg.split_ratios.begin(), cfg.split_ratios.end()) < 0.0) {
    throw std::invalid_argument("split ratios must be non-negative and sum to 1");
  }
  if (!(cfg.fraction > 0.0 && cfg.fraction <= 1.0)) throw std::invalid_argument("fraction must lie in (0, 1]");
}

void extract_all(DatasetBundle& bundle, const CircuitGraph& g, const SampleConfig& cfg) {
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t i = 0; i < bundle.splits[s].samples.size(); ++i) jobs.push_back({static_cast<Split>(s), i});
  }
  ExtractOptions options;
  options.hops = cfg.hops;
  options.max_nodes = cfg.max_subgraph_nodes;
  options.seed = cfg.seed;
  options.drop_target_link = cfg.drop_target_link;
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t j) {
    Sample& sample = bundle[jobs[j].split].samples[jobs[j].index];
    const double label = sample.subgraph.label;
    const double target = sample.subgraph.target;
    EnclosingSubgraph sg = extract_enclosing_subgraph(g, sample.link.a, sample.link.b, options);
    sg.label = label;
    sg.target = target;
    if (cfg.task != Task::NodeRegression) {
      sg.link_type = static_cast<int>(sample.link.link_type);
      sg.polarity = sample.link.polarity;
    }
    sg.dspd = compute_dspd(sg);
    sample.subgraph = std::move(sg);
  });

  std::size_t truncated = 0;
  nlohmann::json sizes;
  for (std::size_t s = 0; s < 3; ++s) {
    double total = 0.0;
    for (const auto& sample : bundle.splits[s].samples) {
      truncated += sample.subgraph.truncated;
      total += static_cast<double>(sample.subgraph.num_nodes());
    }
    const auto n = bundle.splits[s].samples.size();
    sizes[std::string(split_name(static_cast<Split>(s)))] = n == 0 ? 0.0 : total / static_cast<double>(n);
  }
  bundle.manifest["mean_subgraph_nodes"] = sizes;
  bundle.manifest["truncated_nodes"] = truncated;
}

}  // namespace

DatasetBundle build_dataset(const CircuitGraph& g, std::span<const TargetLink> positives_in, const SampleConfig& cfg) {
  if (cfg.task == Task::NodeRegression) throw std::invalid_argument("use build_node_dataset for node tasks");
  check_ratios(cfg);
  DatasetBundle bundle;
  nlohmann::json& manifest = bundle.manifest;
  manifest["task"] = std::string(task_name(cfg.task));
  manifest["hops"] = cfg.hops;
  manifest["seed"] = cfg.seed;
  manifest["fraction"] = cfg.fraction;
  manifest["split_ratios"] = cfg.split_ratios;
  manifest["max_subgraph_nodes"] = cfg.max_subgraph_nodes;
  manifest["drop_target_link"] = cfg.drop_target_link;
  manifest["positives_in"] = positives_in.size();

  std::vector<TargetLink> positives(positives_in.begin(), positives_in.end());
  std::vector<double> targets(positives.size(), 0.0);
  if (cfg.task == Task::EdgeRegression) {
    auto normalized = normalize_targets(positives, cfg.normalizer);
    manifest["dropped_out_of_range"] = normalized.dropped;
    manifest["normalizer"] = cfg.normalizer.to_json();
    positives = std::move(normalized.kept);
    targets = std::move(normalized.values);
  }
  for (const auto& p : positives) {
    if (p.polarity != Polarity::Positive) throw std::invalid_argument("build_dataset expects positive links");
  }
  const auto negatives = generate_negative_links(positives, g, mix_seed(cfg.seed, 1));

  std::array<std::vector<std::size_t>, 3> by_type;
  for (std::size_t i = 0; i < positives.size(); ++i) by_type[type_slot(positives[i].link_type)].push_back(i);
  nlohmann::json available;
  for (std::size_t s = 0; s < 3; ++s) available.push_back(by_type[s].size());
  manifest["positives_per_type"] = available;

  if (cfg.balance) {
    const std::array<std::size_t, 3> counts = {by_type[0].size(), by_type[1].size(), by_type[2].size()};
    const auto selection = balanced_selection(counts, mix_seed(cfg.seed, 2));
    for (std::size_t s = 0; s < 3; ++s) {
      std::vector<std::size_t> kept;
      for (auto i : selection[s]) kept.push_back(by_type[s][i]);
      by_type[s] = std::move(kept);
    }
  }
  // Every balanced link goes into the graph, so subgraphs look the same
  // whatever fraction of them is kept as samples.
  std::vector<TargetLink> injected;
  for (const auto& ids : by_type) {
    for (auto i : ids) {
      injected.push_back(positives[i]);
      injected.push_back(negatives[i]);
    }
  }
  if (cfg.fraction < 1.0) {
    for (std::size_t s = 0; s < 3; ++s) {
      Rng rng(mix_seed(cfg.seed, 3 + s));
      const auto k = static_cast<std::size_t>(std::llround(cfg.fraction * static_cast<double>(by_type[s].size())));
      std::vector<std::size_t> kept;
      for (auto i : sample_sorted(by_type[s].size(), k, rng)) kept.push_back(by_type[s][i]);
      by_type[s] = std::move(kept);
    }
  }

  std::array<std::vector<std::size_t>, 3> split_pairs;
  nlohmann::json per_type = nlohmann::json::object();
  for (std::size_t s = 0; s < 3; ++s) {
    auto pairs = by_type[s];
    Rng rng(mix_seed(cfg.seed, 10 + s));
    rng.shuffle(std::span<std::size_t>(pairs));
    const auto counts = split_counts(pairs.size(), cfg.split_ratios);
    std::size_t offset = 0;
    for (std::size_t sp = 0; sp < 3; ++sp) {
      split_pairs[sp].insert(split_pairs[sp].end(), pairs.begin() + static_cast<std::ptrdiff_t>(offset),
                             pairs.begin() + static_cast<std::ptrdiff_t>(offset + counts[sp]));
      per_type[std::string(split_name(static_cast<Split>(sp)))].push_back(2 * counts[sp]);
      offset += counts[sp];
    }
  }
  manifest["links_per_type"] = per_type;

  for (std::size_t sp = 0; sp < 3; ++sp) {
    auto& pairs = split_pairs[sp];
    std::sort(pairs.begin(), pairs.end());
    auto& ds = bundle.splits[sp];
    ds.split = static_cast<Split>(sp);
    ds.seed = cfg.seed;
    for (auto i : pairs) {
      Sample pos;
      pos.link = positives[i];
      pos.subgraph.label = cfg.task == Task::Link ? 1.0 : targets[i];
      pos.subgraph.target = positives[i].cap_target.value_or(-1.0);
      Sample neg;
      neg.link = negatives[i];
      neg.subgraph.label = 0.0;
      neg.subgraph.target = 0.0;
      ds.samples.push_back(std::move(pos));
      ds.samples.push_back(std::move(neg));
    }
    manifest["size"][std::string(split_name(ds.split))] = ds.samples.size();
  }

  const CircuitGraph with_links = inject_links(g, injected);
  extract_all(bundle, with_links, cfg);
  return bundle;
}

DatasetBundle build_node_dataset(const CircuitGraph& g, std::span<const NodeTarget> targets_in,
                                 const SampleConfig& cfg) {
  check_ratios(cfg);
  DatasetBundle bundle;
  nlohmann::json& manifest = bundle.manifest;
  manifest["task"] = std::string(task_name(Task::NodeRegression));
  manifest["hops"] = cfg.hops;
  manifest["seed"] = cfg.seed;
  manifest["fraction"] = cfg.fraction;
  manifest["split_ratios"] = cfg.split_ratios;
  manifest["max_subgraph_nodes"] = cfg.max_subgraph_nodes;
  manifest["normalizer"] = cfg.normalizer.to_json();

  std::vector<NodeTarget> targets;
  std::vector<double> values;
  std::size_t dropped = 0;
  for (const auto& t : targets_in) {
    const auto v = cfg.normalizer.forward(t.capacitance);
    if (!v) {
      ++dropped;
      continue;
    }
    targets.push_back(t);
    values.push_back(*v);
  }
  manifest["dropped_out_of_range"] = dropped;

  std::vector<std::size_t> order;
  {
    Rng rng(mix_seed(cfg.seed, 3));
    const auto k = static_cast<std::size_t>(std::llround(cfg.fraction * static_cast<double>(targets.size())));
    order = sample_sorted(targets.size(), k, rng);
  }
  Rng rng(mix_seed(cfg.seed, 10));
  rng.shuffle(std::span<std::size_t>(order));
  const auto counts = split_counts(order.size(), cfg.split_ratios);
  std::size_t offset = 0;
  for (std::size_t sp = 0; sp < 3; ++sp) {
    std::vector<std::size_t> part(order.begin() + static_cast<std::ptrdiff_t>(offset),
                                  order.begin() + static_cast<std::ptrdiff_t>(offset + counts[sp]));
    offset += counts[sp];
    std::sort(part.begin(), part.end());
    auto& ds = bundle.splits[sp];
    ds.split = static_cast<Split>(sp);
    ds.seed = cfg.seed;
    for (auto i : part) {
      Sample s;
      s.link.a = s.link.b = targets[i].node;
      s.link.cap_target = targets[i].capacitance;
      s.subgraph.label = values[i];
      s.subgraph.target = targets[i].capacitance;
      ds.samples.push_back(std::move(s));
    }
    manifest["size"][std::string(split_name(ds.split))] = ds.samples.size();
  }
  extract_all(bundle, g, cfg);
  return bundle;
}

}  // namespace cirgps
