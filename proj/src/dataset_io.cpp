#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "cirgps/sampler.hpp"

namespace cirgps {
namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void expect_keyword(std::istringstream& in, const char* keyword) {
  std::string word;
  if (!(in >> word) || word != keyword) {
    throw ParseError(fmt::format("expected '{}' in subgraph record, got '{}'", keyword, word), 0, 0);
  }
}

template <typename T>
T read_value(std::istringstream& in) {
  T v{};
  if (!(in >> v)) throw ParseError("truncated subgraph record", 0, 0);
  return v;
}

double read_double(std::istringstream& in) {
  const auto tok = read_value<std::string>(in);
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str()) throw ParseError("malformed number '" + tok + "' in subgraph record", 0, 0);
  return v;
}

}  // namespace

std::string dump_subgraph(const EnclosingSubgraph& sg) {
  std::string out = fmt::format("{} {}\n", sg.num_nodes(), sg.edges.size());
  for (std::size_t i = 0; i < sg.num_nodes(); ++i) {
    out += fmt::format("{} {} {}\n", i, static_cast<int>(sg.node_types[i]), sg.names[i]);
  }
  for (const auto& e : sg.edges) out += fmt::format("{} {} {}\n", e.src, e.dst, static_cast<int>(e.type));
  out += fmt::format("anchors {} {}\n", sg.anchor_m, sg.anchor_n);
  out += fmt::format("hops {}\n", sg.hops);
  out += fmt::format("link {} {}\n", sg.link_type, static_cast<int>(sg.polarity));
  out += fmt::format("label {:.17g}\n", sg.label);
  out += fmt::format("target {:.17g}\n", sg.target);
  out += fmt::format("truncated {}\n", sg.truncated);
  out += "global";
  for (int v : sg.nodes) out += fmt::format(" {}", v);
  out += "\nstats\n";
  for (Eigen::Index i = 0; i < sg.stats.rows(); ++i) {
    for (Eigen::Index j = 0; j < sg.stats.cols(); ++j) out += fmt::format("{}{:.17g}", j == 0 ? "" : " ", sg.stats(i, j));
    out += "\n";
  }
  out += "dspd\n";
  for (const auto& row : sg.dspd.rows) out += fmt::format("{} {}\n", row[0], row[1]);
  return out;
}

EnclosingSubgraph load_subgraph(std::string_view text) {
  std::istringstream in{std::string(text)};
  EnclosingSubgraph sg;
  const auto n = read_value<std::size_t>(in);
  const auto ne = read_value<std::size_t>(in);
  for (std::size_t i = 0; i < n; ++i) {
    const auto idx = read_value<std::size_t>(in);
    const auto type = read_value<int>(in);
    auto name = read_value<std::string>(in);
    if (idx != i || type < 0 || type >= kNumNodeTypes) throw ParseError("bad node line in subgraph record", i + 2, 0);
    sg.node_types.push_back(static_cast<NodeType>(type));
    sg.names.push_back(std::move(name));
  }
  for (std::size_t i = 0; i < ne; ++i) {
    LocalEdge e;
    e.src = read_value<int>(in);
    e.dst = read_value<int>(in);
    const auto t = read_value<int>(in);
    if (t < 0 || t >= kNumEdgeTypes || e.src < 0 || e.dst < 0 || static_cast<std::size_t>(std::max(e.src, e.dst)) >= n) {
      throw ParseError("bad edge line in subgraph record", n + i + 2, 0);
    }
    e.type = static_cast<EdgeType>(t);
    sg.edges.push_back(e);
  }
  expect_keyword(in, "anchors");
  sg.anchor_m = read_value<int>(in);
  sg.anchor_n = read_value<int>(in);
  expect_keyword(in, "hops");
  sg.hops = read_value<int>(in);
  expect_keyword(in, "link");
  sg.link_type = read_value<int>(in);
  sg.polarity = static_cast<Polarity>(read_value<int>(in));
  expect_keyword(in, "label");
  sg.label = read_double(in);
  expect_keyword(in, "target");
  sg.target = read_double(in);
  expect_keyword(in, "truncated");
  sg.truncated = read_value<std::size_t>(in);
  expect_keyword(in, "global");
  for (std::size_t i = 0; i < n; ++i) sg.nodes.push_back(read_value<int>(in));
  expect_keyword(in, "stats");
  sg.stats = StatsMatrix::Zero(static_cast<Eigen::Index>(n), kStatsDim);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < kStatsDim; ++j) sg.stats(static_cast<Eigen::Index>(i), j) = read_double(in);
  }
  expect_keyword(in, "dspd");
  sg.dspd.rows.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    sg.dspd.rows[i][0] = read_value<int>(in);
    sg.dspd.rows[i][1] = read_value<int>(in);
  }
  if (n > 0 && (sg.anchor_m < 0 || sg.anchor_n < 0 || static_cast<std::size_t>(std::max(sg.anchor_m, sg.anchor_n)) >= n)) {
    throw ParseError("anchor out of range in subgraph record", 0, 0);
  }
  return sg;
}

void write_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& ds : bundle.splits) {
    const auto sub = dir / std::string(split_name(ds.split));
    std::filesystem::create_directories(sub);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      write_file(sub / fmt::format("{}.sg", i), dump_subgraph(ds.samples[i].subgraph));
    }
  }
  write_file(dir / "manifest.json", bundle.manifest.dump(2) + "\n");
}

DatasetBundle read_dataset(const std::filesystem::path& dir) {
  DatasetBundle bundle;
  bundle.manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  const Task task = task_from_name(bundle.manifest.at("task").get<std::string>());
  const auto seed = bundle.manifest.value("seed", std::uint64_t{0});
  for (std::size_t s = 0; s < 3; ++s) {
    auto& ds = bundle.splits[s];
    ds.split = static_cast<Split>(s);
    ds.seed = seed;
    const std::string name(split_name(ds.split));
    const auto count = bundle.manifest.at("size").value(name, std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
      Sample sample;
      sample.subgraph = load_subgraph(read_file(dir / name / fmt::format("{}.sg", i)));
      const auto& sg = sample.subgraph;
      sample.link.a = sg.nodes.at(static_cast<std::size_t>(sg.anchor_m));
      sample.link.b = sg.nodes.at(static_cast<std::size_t>(sg.anchor_n));
      sample.link.polarity = sg.polarity;
      if (task != Task::NodeRegression) sample.link.link_type = static_cast<EdgeType>(sg.link_type);
      if (sg.target >= 0.0) sample.link.cap_target = sg.target;
      ds.samples.push_back(std::move(sample));
    }
  }
  return bundle;
}

}  // namespace cirgps
