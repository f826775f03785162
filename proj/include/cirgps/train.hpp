#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cirgps/model.hpp"
#include "cirgps/sampler.hpp"

namespace cirgps {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;  // decoupled; skipped for biases and norm affine terms
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int warmup_epochs = 5;
  double min_lr = 0.0;
};

// Linear warm-up to lr, then cosine decay to min_lr at the final epoch.
double scheduled_lr(const OptimConfig& cfg, int epoch, int total_epochs);

class AdamW {
 public:
  AdamW(std::vector<ad::Parameter*> params, const OptimConfig& cfg);
  // Updates every trainable, non-buffer parameter from its accumulated grad.
  void step(double lr);
  long steps() const { return t_; }

 private:
  std::vector<ad::Parameter*> params_;
  std::vector<ad::Matrix> m_;
  std::vector<ad::Matrix> v_;
  std::vector<bool> decay_;
  OptimConfig cfg_;
  long t_ = 0;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  int patience = 20;  // epochs without validation improvement before stopping
  std::uint64_t seed = 0;
  OptimConfig optim;
};

struct EpochRecord {
  std::string split;
  int epoch = 0;
  double loss = 0.0;
  nlohmann::json metrics;
  double seconds = 0.0;

  nlohmann::json to_json() const;
};

using RecordSink = std::function<void(const EpochRecord&)>;

struct EvalResult {
  double loss = 0.0;
  std::vector<double> scores;  // sigmoid outputs
  std::vector<double> labels;
  nlohmann::json metrics;
};

// Eval-mode pass: link tasks get Acc/F1/AUC, regression tasks MAE/RMSE/R2 on
// the normalized scale.
EvalResult evaluate(GpsModel& model, Task task, std::span<const EnclosingSubgraph> data,
                    const StatsNormalizer& stats_norm, int batch_size = 64);

struct TrainResult {
  int best_epoch = -1;
  int epochs_run = 0;
  double best_valid_loss = 0.0;
  std::vector<double> train_loss;  // mean per epoch
  std::vector<double> valid_loss;
  nlohmann::json final_metrics;    // validation metrics of the restored model
};

// Mini-batch training with BCE on logits (link) or MSE on sigmoid scores
// (regression). A head-only frozen model runs its backbone in eval mode.
// The parameters of the best validation epoch are restored at the end.
TrainResult train_model(GpsModel& model, Task task, std::span<const EnclosingSubgraph> train,
                        std::span<const EnclosingSubgraph> valid, const StatsNormalizer& stats_norm,
                        const TrainConfig& cfg, const RecordSink& sink = {});

// Stats normalizer fitted on a dataset's train split.
StatsNormalizer fit_stats_normalizer(const DatasetBundle& data);

struct RunOutput {
  StatsNormalizer stats_norm;
  TrainResult result;
  EvalResult test;  // empty when the test split is empty
};

RunOutput pretrain_link(GpsModel& model, const DatasetBundle& data, const TrainConfig& cfg,
                        const RecordSink& sink = {});
RunOutput finetune(GpsModel& model, const DatasetBundle& data, const TrainConfig& cfg, FreezeMode mode,
                   const RecordSink& sink = {});
RunOutput train_node_regression(GpsModel& model, const DatasetBundle& data, const TrainConfig& cfg,
                                const RecordSink& sink = {});

}  // namespace cirgps
