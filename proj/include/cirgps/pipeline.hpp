#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "cirgps/config.hpp"

namespace cirgps {

// Missing or unreadable inputs, and inputs that do not fit together (a
// checkpoint whose architecture differs from the configured one, an empty
// split).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Builds a directory under a temporary sibling name and renames it into place
// on commit, replacing any previous output. Abandoned directories are removed.
class StagedDir {
 public:
  explicit StagedDir(std::filesystem::path target);
  ~StagedDir();
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;

  const std::filesystem::path& path() const { return staging_; }
  std::filesystem::path operator/(const std::string& name) const { return staging_ / name; }
  void commit();

 private:
  std::filesystem::path target_;
  std::filesystem::path staging_;
  bool committed_ = false;
};

// Human-readable progress (per-epoch table rows). May be null.
using LogStream = std::ostream*;

// Every command writes config.ini (the resolved configuration) and
// report.json into `out` and returns the report.
//
// convert: graph.txt, stats.txt, links.txt (positive coupling links with
//   farads), ground.txt (node ground targets).
nlohmann::json run_convert(const Config& cfg, const std::filesystem::path& netlist,
                           const std::filesystem::path& labels, const std::filesystem::path& out);

// sample: a dataset directory (manifest.json + per-split records) built from
// a convert directory according to run.task.
nlohmann::json run_sample(const Config& cfg, const std::filesystem::path& graph_dir,
                          const std::filesystem::path& out);

// pretrain: link prediction from scratch. model.ckpt, metrics.jsonl (one
// record per split and epoch), metrics.json.
nlohmann::json run_pretrain(const Config& cfg, const std::filesystem::path& dataset,
                            const std::filesystem::path& out, LogStream log = nullptr);

// finetune: regression on a dataset. finetune.mode head|all starts from
// finetune.checkpoint; none trains the configured architecture from scratch.
nlohmann::json run_finetune(const Config& cfg, const std::filesystem::path& dataset,
                            const std::filesystem::path& out, LogStream log = nullptr);

// eval: metrics.json for one split of a dataset.
nlohmann::json run_eval(const Config& cfg, const std::filesystem::path& checkpoint,
                        const std::filesystem::path& dataset, const std::string& split,
                        const std::filesystem::path& out);

// predict: predictions.jsonl with one record per sample of the split.
nlohmann::json run_predict(const Config& cfg, const std::filesystem::path& checkpoint,
                           const std::filesystem::path& dataset, const std::string& split,
                           const std::filesystem::path& out);

// synth: netlist.sp and labels.spf for a synthetic design.
nlohmann::json run_synth(const Config& cfg, const std::filesystem::path& out);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cirgps
