#include "cirgps/pipeline.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "cirgps/graph.hpp"
#include "cirgps/labels.hpp"
#include "cirgps/metrics.hpp"
#include "cirgps/netlist.hpp"
#include "cirgps/sampler.hpp"
#include "cirgps/synth.hpp"
#include "cirgps/train.hpp"

namespace cirgps {

namespace fs = std::filesystem;

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw DataError("cannot write " + path.string());
}

StagedDir::StagedDir(fs::path target) : target_(std::move(target)) {
  if (target_.empty()) throw DataError("no output directory given");
  target_ = fs::absolute(target_).lexically_normal();
  if (!target_.has_filename()) target_ = target_.parent_path();
  fs::create_directories(target_.parent_path());
  staging_ = target_.parent_path() / ("." + target_.filename().string() + ".staging");
  fs::remove_all(staging_);
  fs::create_directory(staging_);
}

StagedDir::~StagedDir() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

void StagedDir::commit() {
  fs::remove_all(target_);
  fs::rename(staging_, target_);
  committed_ = true;
}

namespace {

constexpr std::uint64_t kModelSeedSalt = 0x6d6f64656cULL;

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) throw DataError(fmt::format("{} not found: {}", what, path.string()));
}

// Parse errors carry line:column; prefix the file so the message reads
// path:line:column.
template <typename F>
auto with_file(const fs::path& path, F&& f) {
  try {
    return f();
  } catch (const ParseError& e) {
    throw DataError(fmt::format("{}:{}", path.string(), e.what()));
  } catch (const NetlistError& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::string dump_node_targets(std::span<const NodeTarget> targets) {
  std::string out = fmt::format("{}\n", targets.size());
  for (const auto& t : targets) out += fmt::format("{} {:.17g}\n", t.node, t.capacitance);
  return out;
}

std::vector<NodeTarget> load_node_targets(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::size_t count = 0;
  if (!(in >> count)) throw ParseError("bad ground target header", 1, 0);
  std::vector<NodeTarget> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!(in >> out[i].node >> out[i].capacitance)) throw ParseError("truncated ground target list", i + 2, 0);
  }
  return out;
}

void echo_config(const Config& cfg, const StagedDir& dir) { write_text_file(dir / "config.ini", cfg.dump()); }

void write_report(const StagedDir& dir, const nlohmann::json& report) {
  write_text_file(dir / "report.json", report.dump(2) + "\n");
}

DatasetBundle load_dataset(const fs::path& dir) {
  require_file(dir / "manifest.json", "dataset manifest");
  return with_file(dir, [&] { return read_dataset(dir); });
}

struct JsonlSink {
  std::ofstream out;
  LogStream log;

  void operator()(const EpochRecord& r) {
    out << r.to_json().dump() << '\n';
    if (!log) return;
    std::string extra;
    for (const char* key : {"auc", "accuracy", "r2", "mae", "lr"}) {
      if (r.metrics.contains(key) && r.metrics[key].is_number()) {
        extra += fmt::format("  {} {:.4f}", key, r.metrics[key].get<double>());
      }
    }
    *log << fmt::format("{:>5}  {:<5}  loss {:.6f}{}  ({:.1f}s)\n", r.epoch, r.split, r.loss, extra, r.seconds);
  }
};

nlohmann::json run_summary(Task task, const RunOutput& out) {
  nlohmann::json j;
  j["task"] = std::string(task_name(task));
  j["best_epoch"] = out.result.best_epoch;
  j["epochs_run"] = out.result.epochs_run;
  j["best_monitored_loss"] = out.result.best_valid_loss;
  j["valid"] = out.result.final_metrics.is_null() ? nlohmann::json::object() : out.result.final_metrics;
  j["test"] = out.test.labels.empty() ? nlohmann::json::object() : out.test.metrics;
  return j;
}

nlohmann::json checkpoint_manifest(Task task, const RunOutput& out, const DatasetBundle& data, const Config& cfg) {
  nlohmann::json m;
  m["task"] = std::string(task_name(task));
  m["stats_normalizer"] = out.stats_norm.to_json();
  if (data.manifest.contains("normalizer")) m["target_normalizer"] = data.manifest["normalizer"];
  m["seed"] = cfg.seed();
  m["best_epoch"] = out.result.best_epoch;
  return m;
}

void check_architecture(const ModelConfig& have, const ModelConfig& want, const fs::path& ckpt) {
  const bool same = have.d0 == want.d0 && have.d_pe == want.d_pe && have.layers == want.layers &&
                    have.heads == want.heads && have.max_dist == want.max_dist && have.use_mpnn == want.use_mpnn &&
                    have.use_attention == want.use_attention;
  if (!same) {
    throw DataError(fmt::format("checkpoint {} has architecture {} but the configuration asks for {}", ckpt.string(),
                                have.to_json().dump(), want.to_json().dump()));
  }
}

GpsModel::Loaded load_checkpoint(const fs::path& path) {
  require_file(path, "checkpoint");
  try {
    return GpsModel::load(path);
  } catch (const ModelError& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

Split parse_split(const std::string& name) {
  for (Split s : {Split::Train, Split::Valid, Split::Test}) {
    if (split_name(s) == name) return s;
  }
  throw ConfigError(fmt::format("unknown split '{}'", name));
}

struct Scored {
  Task task;
  EvalResult eval;
  std::vector<EnclosingSubgraph> samples;
  nlohmann::json ckpt_manifest;
};

Scored score_split(const fs::path& checkpoint, const fs::path& dataset, const std::string& split) {
  auto loaded = load_checkpoint(checkpoint);
  const DatasetBundle data = load_dataset(dataset);
  const Task task = task_from_name(data.manifest.at("task").get<std::string>());
  Scored s{task, {}, data[parse_split(split)].subgraphs(), loaded.manifest};
  if (s.samples.empty()) throw DataError(fmt::format("split '{}' of {} is empty", split, dataset.string()));
  StatsNormalizer norm;
  if (loaded.manifest.contains("stats_normalizer")) norm = StatsNormalizer::from_json(loaded.manifest["stats_normalizer"]);
  s.eval = evaluate(*loaded.model, task, s.samples, norm);
  return s;
}

std::optional<TargetNormalizer> target_normalizer(const nlohmann::json& ckpt_manifest, const fs::path& dataset) {
  if (ckpt_manifest.contains("target_normalizer")) return TargetNormalizer::from_json(ckpt_manifest["target_normalizer"]);
  const auto manifest = nlohmann::json::parse(read_text_file(dataset / "manifest.json"));
  if (manifest.contains("normalizer")) return TargetNormalizer::from_json(manifest["normalizer"]);
  return std::nullopt;
}

}  // namespace

nlohmann::json run_convert(const Config& cfg, const fs::path& netlist_path, const fs::path& labels_path,
                           const fs::path& out) {
  require_file(netlist_path, "netlist");
  require_file(labels_path, "label file");
  const std::string netlist_text = read_text_file(netlist_path);
  const std::string label_text = read_text_file(labels_path);

  const Netlist netlist = with_file(netlist_path, [&] { return parse_netlist(netlist_text); });
  const FlatCircuit flat = with_file(netlist_path, [&] { return flatten(netlist); });
  std::size_t missing = 0;
  const CircuitGraph g = build_graph_with_stats(flat, &missing);
  const LabelSet labels = with_file(labels_path, [&] { return parse_labels(label_text); });
  const LinkMatch links = match_labels(g, labels.coupling);
  const NodeMatch ground = match_ground_labels(g, labels.ground);

  nlohmann::json report;
  std::array<std::size_t, kNumNodeTypes> nodes{};
  std::array<std::size_t, kNumEdgeTypes> edges{};
  for (auto t : g.node_types()) ++nodes[static_cast<std::size_t>(t)];
  for (const auto& e : g.edges()) ++edges[static_cast<std::size_t>(e.type)];
  std::array<std::size_t, kNumEdgeTypes> link_counts{};
  for (const auto& l : links.links) ++link_counts[static_cast<std::size_t>(l.link_type)];
  report["nodes"] = {{"total", g.num_nodes()}, {"net", nodes[0]}, {"device", nodes[1]}, {"pin", nodes[2]}};
  report["edges"] = {{"total", g.num_edges()}, {"device_pin", edges[0]}, {"net_pin", edges[1]}};
  report["coupling_links"] = {{"pin_net", link_counts[2]}, {"pin_pin", link_counts[3]}, {"net_net", link_counts[4]}};
  report["ground_targets"] = ground.targets.size();
  report["skipped_labels"] = {{"coupling_unresolved", links.unresolved},
                              {"coupling_self_loops", links.self_loops},
                              {"coupling_merged", links.merged},
                              {"ground_unresolved", ground.unresolved},
                              {"ground_merged", ground.merged}};
  report["missing_device_params"] = missing;
  report["netlist"] = netlist_path.string();
  report["labels"] = labels_path.string();

  StagedDir dir(out);
  write_text_file(dir / "graph.txt", g.dump());
  write_text_file(dir / "stats.txt", dump_stats(g.stats));
  write_text_file(dir / "links.txt", dump_links(links.links));
  write_text_file(dir / "ground.txt", dump_node_targets(ground.targets));
  echo_config(cfg, dir);
  write_report(dir, report);
  dir.commit();
  return report;
}

nlohmann::json run_sample(const Config& cfg, const fs::path& graph_dir, const fs::path& out) {
  const SampleConfig sc = cfg.sample();
  for (const char* f : {"graph.txt", "stats.txt", "links.txt", "ground.txt"}) require_file(graph_dir / f, "graph file");
  CircuitGraph g = with_file(graph_dir / "graph.txt", [&] { return CircuitGraph::load(read_text_file(graph_dir / "graph.txt")); });
  g.stats = with_file(graph_dir / "stats.txt", [&] { return load_stats(read_text_file(graph_dir / "stats.txt")); });
  if (static_cast<std::size_t>(g.stats.rows()) != g.num_nodes()) {
    throw DataError(fmt::format("{}: {} stats rows for {} nodes", (graph_dir / "stats.txt").string(), g.stats.rows(),
                                g.num_nodes()));
  }

  DatasetBundle bundle;
  try {
    if (sc.task == Task::NodeRegression) {
      const auto targets = with_file(graph_dir / "ground.txt", [&] { return load_node_targets(read_text_file(graph_dir / "ground.txt")); });
      bundle = build_node_dataset(g, targets, sc);
    } else {
      const auto links = with_file(graph_dir / "links.txt", [&] { return load_links(read_text_file(graph_dir / "links.txt")); });
      bundle = build_dataset(g, links, sc);
    }
  } catch (const SamplingError& e) {
    throw DataError(e.what());
  }

  StagedDir dir(out);
  write_dataset(bundle, dir.path());
  echo_config(cfg, dir);
  write_report(dir, bundle.manifest);
  dir.commit();
  return bundle.manifest;
}

nlohmann::json run_pretrain(const Config& cfg, const fs::path& dataset, const fs::path& out, LogStream log) {
  const ModelConfig mc = cfg.model();
  const TrainConfig tc = cfg.train();
  const DatasetBundle data = load_dataset(dataset);
  if (data.manifest.at("task") != "link") throw DataError("pretrain needs a link dataset: " + dataset.string());

  StagedDir dir(out);
  JsonlSink sink{std::ofstream(dir / "metrics.jsonl"), log};
  GpsModel model(mc, mix_seed(cfg.seed(), kModelSeedSalt));
  const RunOutput result = pretrain_link(model, data, tc, std::ref(sink));
  sink.out.close();

  const nlohmann::json summary = run_summary(Task::Link, result);
  model.save(dir / "model.ckpt", checkpoint_manifest(Task::Link, result, data, cfg), Rng(tc.seed).state());
  write_text_file(dir / "metrics.json", summary.dump(2) + "\n");
  echo_config(cfg, dir);
  write_report(dir, summary);
  dir.commit();
  return summary;
}

nlohmann::json run_finetune(const Config& cfg, const fs::path& dataset, const fs::path& out, LogStream log) {
  const auto mode = cfg.finetune_mode();
  const ModelConfig mc = cfg.model();
  const TrainConfig tc = cfg.train();
  const DatasetBundle data = load_dataset(dataset);
  const Task task = task_from_name(data.manifest.at("task").get<std::string>());
  if (task == Task::Link) throw DataError("finetune needs a regression dataset: " + dataset.string());

  std::unique_ptr<GpsModel> model;
  if (mode) {
    const fs::path ckpt = cfg.get("finetune.checkpoint");
    model = std::move(load_checkpoint(ckpt).model);
    check_architecture(model->config(), mc, ckpt);
  } else {
    model = std::make_unique<GpsModel>(mc, mix_seed(cfg.seed(), kModelSeedSalt));
  }

  StagedDir dir(out);
  JsonlSink sink{std::ofstream(dir / "metrics.jsonl"), log};
  RunOutput result;
  if (!mode && task == Task::NodeRegression) {
    result = train_node_regression(*model, data, tc, std::ref(sink));
  } else {
    result = finetune(*model, data, tc, mode.value_or(FreezeMode::None), std::ref(sink));
  }
  sink.out.close();

  nlohmann::json summary = run_summary(task, result);
  summary["mode"] = cfg.get("finetune.mode");
  model->save(dir / "model.ckpt", checkpoint_manifest(task, result, data, cfg), Rng(tc.seed).state());
  write_text_file(dir / "metrics.json", summary.dump(2) + "\n");
  echo_config(cfg, dir);
  write_report(dir, summary);
  dir.commit();
  return summary;
}

nlohmann::json run_eval(const Config& cfg, const fs::path& checkpoint, const fs::path& dataset,
                        const std::string& split, const fs::path& out) {
  const Scored s = score_split(checkpoint, dataset, split);
  nlohmann::json report;
  report["task"] = std::string(task_name(s.task));
  report["split"] = split;
  report["metrics"] = s.eval.metrics;
  if (s.task != Task::Link) {
    // Denormalized errors over samples that carry a capacitance, in fF.
    if (const auto tn = target_normalizer(s.ckpt_manifest, dataset)) {
      std::vector<double> pred;
      std::vector<double> truth;
      for (std::size_t i = 0; i < s.samples.size(); ++i) {
        if (s.samples[i].target <= 0.0) continue;
        pred.push_back(tn->inverse(s.eval.scores[i]) * 1e15);
        truth.push_back(s.samples[i].target * 1e15);
      }
      if (!pred.empty()) {
        const auto m = regression_metrics(pred, truth);
        report["femtofarads"] = {{"mae", m.mae}, {"rmse", m.rmse}, {"count", pred.size()}};
      }
    }
  }

  StagedDir dir(out);
  write_text_file(dir / "metrics.json", report.dump(2) + "\n");
  echo_config(cfg, dir);
  write_report(dir, report);
  dir.commit();
  return report;
}

nlohmann::json run_predict(const Config& cfg, const fs::path& checkpoint, const fs::path& dataset,
                           const std::string& split, const fs::path& out) {
  const Scored s = score_split(checkpoint, dataset, split);
  std::optional<TargetNormalizer> tn;
  if (s.task != Task::Link) tn = target_normalizer(s.ckpt_manifest, dataset);

  std::string lines;
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    const auto& sg = s.samples[i];
    nlohmann::json r;
    r["index"] = i;
    r["a"] = sg.names.at(static_cast<std::size_t>(sg.anchor_m));
    r["b"] = sg.names.at(static_cast<std::size_t>(sg.anchor_n));
    if (sg.link_type >= 0) r["link_type"] = sg.link_type;
    r["label"] = sg.label;
    r["score"] = s.eval.scores[i];
    if (tn) {
      r["predicted_farads"] = tn->inverse(s.eval.scores[i]);
      if (sg.target > 0.0) r["target_farads"] = sg.target;
    }
    lines += r.dump() + "\n";
  }
  nlohmann::json report = {{"task", std::string(task_name(s.task))}, {"split", split}, {"rows", s.samples.size()}};

  StagedDir dir(out);
  write_text_file(dir / "predictions.jsonl", lines);
  echo_config(cfg, dir);
  write_report(dir, report);
  dir.commit();
  return report;
}

nlohmann::json run_synth(const Config& cfg, const fs::path& out) {
  const SynthConfig sc = cfg.synth();
  const SynthCircuit c = generate_synthetic_circuit(sc, cfg.seed());
  nlohmann::json report;
  report["synth"] = sc.to_json();
  report["seed"] = cfg.seed();
  report["devices"] = c.flat.devices.size();
  report["nets"] = c.flat.nets.size();
  report["pins"] = c.flat.pins.size();
  report["coupling_labels"] = c.labels.coupling.size();
  report["ground_labels"] = c.labels.ground.size();

  StagedDir dir(out);
  write_text_file(dir / "netlist.sp", c.netlist_text);
  write_text_file(dir / "labels.spf", c.label_text);
  echo_config(cfg, dir);
  write_report(dir, report);
  dir.commit();
  return report;
}

}  // namespace cirgps
