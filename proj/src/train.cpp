#include "cirgps/train.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "cirgps/metrics.hpp"

namespace cirgps {

double scheduled_lr(const OptimConfig& cfg, int epoch, int total_epochs) {
  if (epoch < cfg.warmup_epochs) {
    return cfg.lr * static_cast<double>(epoch + 1) / static_cast<double>(cfg.warmup_epochs + 1);
  }
  const int span = std::max(1, total_epochs - cfg.warmup_epochs);
  const double progress = std::min(1.0, static_cast<double>(epoch - cfg.warmup_epochs) / span);
  return cfg.min_lr + 0.5 * (cfg.lr - cfg.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(std::vector<ad::Parameter*> params, const OptimConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
  for (auto* p : params_) {
    m_.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
    const bool is_bias = p->name.ends_with(".b") || p->name.ends_with(".beta") || p->name.ends_with(".gamma");
    decay_.push_back(!is_bias);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    if (p.buffer || !p.trainable) continue;
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) continue;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
    if (decay_[i] && cfg_.weight_decay > 0.0) p.value *= 1.0 - lr * cfg_.weight_decay;
    p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
  }
}

nlohmann::json EpochRecord::to_json() const {
  return {{"split", split}, {"epoch", epoch}, {"loss", loss}, {"metrics", metrics}, {"seconds", seconds}};
}

namespace {

bool is_classification(Task task) { return task == Task::Link; }

double sigmoid(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

ad::Var task_loss(Task task, ad::Var logits, std::span<const double> labels) {
  if (is_classification(task)) return ad::bce_with_logits(logits, labels);
  return ad::mse(ad::sigmoid(logits), labels);
}

std::vector<std::vector<const EnclosingSubgraph*>> make_batches(std::span<const EnclosingSubgraph> data,
                                                                std::span<const std::size_t> order, int batch_size) {
  std::vector<std::vector<const EnclosingSubgraph*>> out;
  const auto bs = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t start = 0; start < order.size(); start += bs) {
    std::vector<const EnclosingSubgraph*> batch;
    for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) batch.push_back(&data[order[i]]);
    out.push_back(std::move(batch));
  }
  return out;
}

std::vector<ad::Matrix> snapshot(const GpsModel& model) {
  std::vector<ad::Matrix> out;
  for (const auto* p : model.parameters()) out.push_back(p->value);
  return out;
}

void restore(GpsModel& model, const std::vector<ad::Matrix>& values) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace

EvalResult evaluate(GpsModel& model, Task task, std::span<const EnclosingSubgraph> data,
                    const StatsNormalizer& stats_norm, int batch_size) {
  if (data.empty()) throw std::invalid_argument("cannot evaluate an empty dataset");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  EvalResult r;
  double loss_sum = 0.0;
  for (const auto& batch_ptrs : make_batches(data, order, batch_size)) {
    const GraphBatch batch = collate(batch_ptrs, model.config().max_dist, stats_norm);
    ad::Tape tape;
    const ad::Var logits = model.forward(tape, batch, false, nullptr);
    loss_sum += task_loss(task, logits, batch.labels).value()(0, 0) * static_cast<double>(batch.size());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) r.scores.push_back(sigmoid(logits.value()(i, 0)));
    r.labels.insert(r.labels.end(), batch.labels.begin(), batch.labels.end());
  }
  r.loss = loss_sum / static_cast<double>(data.size());
  r.metrics = is_classification(task) ? to_json(classification_metrics(r.scores, r.labels))
                                      : to_json(regression_metrics(r.scores, r.labels));
  r.metrics["loss"] = r.loss;
  r.metrics["count"] = data.size();
  return r;
}

TrainResult train_model(GpsModel& model, Task task, std::span<const EnclosingSubgraph> train,
                        std::span<const EnclosingSubgraph> valid, const StatsNormalizer& stats_norm,
                        const TrainConfig& cfg, const RecordSink& sink) {
  if (train.empty()) throw std::invalid_argument("training split is empty");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("epochs and batch_size must be positive");
  using clock = std::chrono::steady_clock;
  const bool backbone_training = model.freeze() == FreezeMode::None;
  AdamW opt(model.parameters(), cfg.optim);
  Rng rng(mix_seed(cfg.seed, 0x7472));

  TrainResult result;
  result.best_valid_loss = std::numeric_limits<double>::infinity();
  std::vector<ad::Matrix> best = snapshot(model);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = clock::now();
    rng.shuffle(std::span<std::size_t>(order));
    const double lr = scheduled_lr(cfg.optim, epoch, cfg.epochs);
    double loss_sum = 0.0;
    for (const auto& batch_ptrs : make_batches(train, order, cfg.batch_size)) {
      const GraphBatch batch = collate(batch_ptrs, model.config().max_dist, stats_norm);
      model.zero_grad();
      ad::Tape tape;
      const ad::Var loss = task_loss(task, model.forward(tape, batch, backbone_training, &rng), batch.labels);
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) throw DivergenceError(fmt::format("non-finite training loss at epoch {}", epoch));
      tape.backward(loss);
      opt.step(lr);
      loss_sum += value * static_cast<double>(batch.size());
    }
    const double train_loss = loss_sum / static_cast<double>(train.size());
    result.train_loss.push_back(train_loss);
    result.epochs_run = epoch + 1;
    const double seconds = std::chrono::duration<double>(clock::now() - t0).count();
    if (sink) sink({"train", epoch, train_loss, {{"lr", lr}}, seconds});

    double monitored = train_loss;
    if (!valid.empty()) {
      const auto t1 = clock::now();
      const EvalResult ev = evaluate(model, task, valid, stats_norm, cfg.batch_size);
      monitored = ev.loss;
      result.valid_loss.push_back(ev.loss);
      if (sink) sink({"valid", epoch, ev.loss, ev.metrics, std::chrono::duration<double>(clock::now() - t1).count()});
    }
    if (!std::isfinite(monitored)) throw DivergenceError(fmt::format("non-finite validation loss at epoch {}", epoch));
    if (monitored < result.best_valid_loss) {
      result.best_valid_loss = monitored;
      result.best_epoch = epoch;
      best = snapshot(model);
    } else if (epoch - result.best_epoch >= cfg.patience) {
      break;
    }
  }
  restore(model, best);
  if (!valid.empty()) result.final_metrics = evaluate(model, task, valid, stats_norm, cfg.batch_size).metrics;
  return result;
}

StatsNormalizer fit_stats_normalizer(const DatasetBundle& data) {
  StatsNormalizer norm;
  const auto train = data[Split::Train].subgraphs();
  if (train.empty()) throw std::invalid_argument("training split is empty");
  norm.fit(train);
  return norm;
}

namespace {

RunOutput run(GpsModel& model, Task task, const DatasetBundle& data, const TrainConfig& cfg, const RecordSink& sink) {
  RunOutput out;
  out.stats_norm = fit_stats_normalizer(data);
  const auto train = data[Split::Train].subgraphs();
  const auto valid = data[Split::Valid].subgraphs();
  const auto test = data[Split::Test].subgraphs();
  out.result = train_model(model, task, train, valid, out.stats_norm, cfg, sink);
  if (!test.empty()) {
    out.test = evaluate(model, task, test, out.stats_norm, cfg.batch_size);
    if (sink) sink({"test", out.result.epochs_run - 1, out.test.loss, out.test.metrics, 0.0});
  }
  return out;
}

Task task_of(const DatasetBundle& data) { return task_from_name(data.manifest.at("task").get<std::string>()); }

}  // namespace

RunOutput pretrain_link(GpsModel& model, const DatasetBundle& data, const TrainConfig& cfg, const RecordSink& sink) {
  if (task_of(data) != Task::Link) throw std::invalid_argument("pre-training needs a link dataset");
  model.set_freeze(FreezeMode::None);
  return run(model, Task::Link, data, cfg, sink);
}

RunOutput finetune(GpsModel& model, const DatasetBundle& data, const TrainConfig& cfg, FreezeMode mode,
                   const RecordSink& sink) {
  const Task task = task_of(data);
  if (task == Task::Link) throw std::invalid_argument("fine-tuning expects a regression dataset");
  model.set_freeze(mode);
  auto out = run(model, task, data, cfg, sink);
  model.set_freeze(FreezeMode::None);
  return out;
}

RunOutput train_node_regression(GpsModel& model, const DatasetBundle& data, const TrainConfig& cfg,
                                const RecordSink& sink) {
  if (task_of(data) != Task::NodeRegression) throw std::invalid_argument("node regression needs a node dataset");
  for (const auto& split : data.splits) {
    for (const auto& s : split.samples) {
      if (!s.subgraph.is_node_task()) throw std::invalid_argument("node dataset sample has two anchors");
    }
  }
  model.set_freeze(FreezeMode::None);
  return run(model, Task::NodeRegression, data, cfg, sink);
}

}  // namespace cirgps
