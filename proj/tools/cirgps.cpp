#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cirgps/config.hpp"
#include "cirgps/graph.hpp"
#include "cirgps/model.hpp"
#include "cirgps/netlist.hpp"
#include "cirgps/pipeline.hpp"
#include "cirgps/sampler.hpp"
#include "cirgps/train.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3 };

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<long long> seed;
  std::optional<int> workers;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override a key, section.key=value (repeatable)");
  cmd->add_option("--out", c.out, "output directory")->required();
  cmd->add_option("--seed", c.seed, "shorthand for --set run.seed=N");
  cmd->add_option("--workers", c.workers, "sampling worker threads");
}

cirgps::Config resolve(const Common& c) {
  cirgps::Config cfg;
  if (!c.config.empty()) cfg.load_file(c.config);
  for (const auto& o : c.overrides) cfg.apply_override(o);
  if (c.seed) cfg.set("run.seed", std::to_string(*c.seed));
  if (c.workers) cfg.set("run.workers", std::to_string(*c.workers));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Circuit graph link prediction and capacitance regression"};
  app.require_subcommand(1);

  Common common;
  std::string netlist, labels, input, checkpoint, mode, split = "test";

  auto* convert = app.add_subcommand("convert", "netlist + parasitic labels -> graph directory");
  convert->add_option("netlist", netlist)->required();
  convert->add_option("labels", labels)->required();
  add_common(convert, common);

  auto* sample = app.add_subcommand("sample", "graph directory -> subgraph dataset");
  sample->add_option("graph", input, "output of convert")->required();
  add_common(sample, common);

  auto* pretrain = app.add_subcommand("pretrain", "link-prediction pre-training");
  pretrain->add_option("dataset", input)->required();
  add_common(pretrain, common);

  auto* finetune = app.add_subcommand("finetune", "capacitance regression");
  finetune->add_option("dataset", input)->required();
  finetune->add_option("--checkpoint", checkpoint, "shorthand for --set finetune.checkpoint=PATH");
  finetune->add_option("--mode", mode, "none, head or all")->check(CLI::IsMember({"none", "head", "all"}));
  add_common(finetune, common);

  auto* eval = app.add_subcommand("eval", "metrics of a checkpoint on one dataset split");
  eval->add_option("checkpoint", checkpoint)->required();
  eval->add_option("dataset", input)->required();
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "valid", "test"}));
  add_common(eval, common);

  auto* predict = app.add_subcommand("predict", "per-sample scores as JSON lines");
  predict->add_option("checkpoint", checkpoint)->required();
  predict->add_option("dataset", input)->required();
  predict->add_option("--split", split)->check(CLI::IsMember({"train", "valid", "test"}));
  add_common(predict, common);

  auto* synth = app.add_subcommand("synth", "synthetic netlist with coupling labels");
  add_common(synth, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    cirgps::Config cfg = resolve(common);
    nlohmann::json report;
    if (*convert) {
      report = cirgps::run_convert(cfg, netlist, labels, common.out);
    } else if (*sample) {
      report = cirgps::run_sample(cfg, input, common.out);
    } else if (*pretrain) {
      report = cirgps::run_pretrain(cfg, input, common.out, &std::cout);
    } else if (*finetune) {
      if (!checkpoint.empty()) cfg.set("finetune.checkpoint", checkpoint);
      if (!mode.empty()) cfg.set("finetune.mode", mode);
      report = cirgps::run_finetune(cfg, input, common.out, &std::cout);
    } else if (*eval) {
      report = cirgps::run_eval(cfg, checkpoint, input, split, common.out);
    } else if (*predict) {
      report = cirgps::run_predict(cfg, checkpoint, input, split, common.out);
    } else if (*synth) {
      report = cirgps::run_synth(cfg, common.out);
    }
    std::cout << report.dump(2) << '\n';
    return kOk;
  } catch (const cirgps::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const cirgps::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    // Parse, graph, sampling, checkpoint and I/O failures.
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}
