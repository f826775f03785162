#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cirgps/autodiff.hpp"
#include "cirgps/normalize.hpp"
#include "cirgps/rng.hpp"
#include "cirgps/subgraph.hpp"

namespace cirgps {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int d0 = 80;     // node-type embedding width
  int d_pe = 8;    // width of each DSPD embedding
  int layers = 4;
  int heads = 4;
  int max_dist = 8;  // DSPD clamp; vocabulary is max_dist + 2
  double dropout = 0.1;
  double bn_momentum = 0.1;
  bool use_mpnn = true;
  bool use_attention = true;
  bool pe_trainable = true;

  int hidden() const { return d0 + 2 * d_pe; }
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// K subgraphs packed into one disjoint union. Node rows of subgraph k occupy
// [offsets[k], offsets[k+1]).
struct GraphBatch {
  std::vector<int> offsets{0};
  std::vector<int> node_types;
  std::vector<int> dist_m;  // clamped DSPD
  std::vector<int> dist_n;
  std::vector<int> edge_src;
  std::vector<int> edge_dst;
  std::vector<int> edge_types;
  ad::Matrix stats;  // normalized X_C, N x kStatsDim
  std::vector<double> labels;

  std::size_t size() const { return offsets.size() - 1; }
  int num_nodes() const { return offsets.back(); }
  int num_edges() const { return static_cast<int>(edge_src.size()); }
};

// Stats rows are scaled with `stats_norm` when it has been fitted.
GraphBatch collate(std::span<const EnclosingSubgraph* const> samples, int max_dist,
                   const StatsNormalizer& stats_norm);
GraphBatch collate(std::span<const EnclosingSubgraph> samples, int max_dist, const StatsNormalizer& stats_norm);

struct ActivationTrace {
  std::vector<ad::Matrix> x;  // X^0 .. X^L
  std::vector<ad::Matrix> e;  // E^0 .. E^L
  std::vector<std::vector<ad::Matrix>> attention;  // per layer, per segment and head
  ad::Matrix pooled;          // X_H, K x d
  ad::Matrix logits;          // K x 1
};

enum class FreezeMode { None, HeadOnly };

// Parallel message-passing + attention layers over typed, DSPD-encoded
// subgraphs, followed by a circuit-statistics head and a 2-layer task head.
class GpsModel {
 public:
  GpsModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  // Forward on a batch; returns K x 1 logits. `training` enables dropout and
  // batch statistics. With a non-null trace the intermediate values are kept.
  ad::Var forward(ad::Tape& tape, const GraphBatch& batch, bool training, Rng* rng,
                  ActivationTrace* trace = nullptr);
  // Eval-mode sigmoid scores, one per subgraph.
  std::vector<double> predict(const GraphBatch& batch);

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  ad::Parameter& param(const std::string& name);
  const ad::Parameter& param(const std::string& name) const;
  std::size_t parameter_count() const;  // learnable scalars, buffers excluded
  static bool is_head_parameter(const std::string& name);

  void set_freeze(FreezeMode mode);
  FreezeMode freeze() const { return freeze_; }
  void zero_grad();
  void zero_task_head();

  void save(const std::filesystem::path& path, const nlohmann::json& manifest, const std::string& rng_state) const;
  struct Loaded;
  static Loaded load(const std::filesystem::path& path);
  // Overwrites this model's tensors; names and shapes must match exactly.
  void load_weights(const std::filesystem::path& path);

 private:
  void read_tensors(std::ifstream& in);
  ad::Parameter& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  void init_linear(const std::string& prefix, int in, int out, Rng& rng);
  ad::Var linear(ad::Tape& t, ad::Var x, const std::string& prefix);
  ad::Var bn(ad::Tape& t, ad::Var x, const std::string& prefix, bool training);

  ModelConfig cfg_;
  FreezeMode freeze_ = FreezeMode::None;
  std::vector<std::unique_ptr<ad::Parameter>> params_;
  std::map<std::string, ad::Parameter*> index_;
};

struct GpsModel::Loaded {
  std::unique_ptr<GpsModel> model;
  nlohmann::json manifest;
  std::string rng_state;
};

// FNV-1a over a tensor's shape and bytes; used to check the freeze contract.
std::uint64_t tensor_hash(const ad::Parameter& p);

}  // namespace cirgps
