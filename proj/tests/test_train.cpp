#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>

#include "cirgps/train.hpp"
#include "support.hpp"

using namespace cirgps;
using testsupport::random_subgraph;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.d0 = 8;
  c.d_pe = 4;
  c.layers = 2;
  c.heads = 2;
  c.max_dist = 4;
  c.dropout = 0.0;
  return c;
}

LinkDataset split_of(Split s, std::vector<EnclosingSubgraph> sgs) {
  LinkDataset d;
  d.split = s;
  for (auto& sg : sgs) d.samples.push_back({TargetLink{}, std::move(sg)});
  return d;
}

// Random subgraphs for a bundle; `label` < 0 keeps the random 0/1 labels.
DatasetBundle bundle_of(Task task, std::uint64_t seed, int n_train, int n_valid, double label = -1.0) {
  Rng rng(seed);
  auto make = [&](int count) {
    std::vector<EnclosingSubgraph> out;
    for (int i = 0; i < count; ++i) {
      auto sg = random_subgraph(rng, 3 + static_cast<int>(rng.below(8)), task == Task::NodeRegression);
      if (label >= 0.0) sg.label = label;
      out.push_back(std::move(sg));
    }
    return out;
  };
  DatasetBundle b;
  b[Split::Train] = split_of(Split::Train, make(n_train));
  b[Split::Valid] = split_of(Split::Valid, make(n_valid));
  b[Split::Test].split = Split::Test;
  b.manifest = {{"task", std::string(task_name(task))}};
  return b;
}

std::map<std::string, std::uint64_t> hashes(const GpsModel& m) {
  std::map<std::string, std::uint64_t> out;
  for (const auto* p : m.parameters()) out[p->name] = tensor_hash(*p);
  return out;
}

TrainConfig quick(int epochs, double lr = 1e-2) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 8;
  t.patience = epochs;
  t.seed = 5;
  t.optim.lr = lr;
  t.optim.warmup_epochs = 2;
  return t;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  OptimConfig o;
  o.lr = 1e-3;
  o.min_lr = 1e-5;
  o.warmup_epochs = 4;
  const int total = 20;
  for (int e = 1; e < o.warmup_epochs; ++e) CHECK(scheduled_lr(o, e, total) > scheduled_lr(o, e - 1, total));
  CHECK(scheduled_lr(o, 0, total) > 0.0);
  CHECK(scheduled_lr(o, o.warmup_epochs - 1, total) < o.lr);
  CHECK(scheduled_lr(o, o.warmup_epochs, total) == doctest::Approx(o.lr));
  for (int e = o.warmup_epochs + 1; e <= total; ++e) CHECK(scheduled_lr(o, e, total) < scheduled_lr(o, e - 1, total));
  CHECK(scheduled_lr(o, total, total) == doctest::Approx(o.min_lr));
  CHECK(scheduled_lr(o, 12, total) == doctest::Approx(o.min_lr + 0.5 * (o.lr - o.min_lr)));
}

TEST_CASE("decoupled weight decay skips biases and norm terms") {
  ad::Parameter w{"layer.W", ad::Matrix::Constant(2, 2, 1.0), ad::Matrix::Zero(2, 2)};
  ad::Parameter b{"layer.b", ad::Matrix::Constant(1, 2, 1.0), ad::Matrix::Zero(1, 2)};
  ad::Parameter g{"bn.gamma", ad::Matrix::Constant(1, 2, 1.0), ad::Matrix::Zero(1, 2)};
  ad::Parameter frozen{"head.W", ad::Matrix::Constant(1, 1, 1.0), ad::Matrix::Constant(1, 1, 3.0)};
  frozen.trainable = false;
  OptimConfig o;
  o.weight_decay = 0.1;
  AdamW opt({&w, &b, &g, &frozen}, o);
  opt.step(0.5);
  CHECK(w.value(0, 0) == doctest::Approx(0.95));
  CHECK(b.value(0, 0) == 1.0);
  CHECK(g.value(0, 0) == 1.0);
  CHECK(frozen.value(0, 0) == 1.0);

  // A unit gradient moves a parameter by about lr on the first step.
  ad::Parameter p{"x.b", ad::Matrix::Zero(1, 1), ad::Matrix::Constant(1, 1, 1.0)};
  AdamW single({&p}, o);
  single.step(0.01);
  CHECK(p.value(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("constant targets are learned") {
  const auto data = bundle_of(Task::EdgeRegression, 1, 32, 8, 0.5);
  GpsModel m(tiny_config(), 2);
  const auto out = finetune(m, data, quick(50), FreezeMode::None);
  CHECK(out.result.final_metrics.at("mae").get<double>() < 0.02);
}

TEST_CASE("training a tiny link set lowers the loss") {
  const auto data = bundle_of(Task::Link, 3, 16, 8);
  GpsModel m(tiny_config(), 4);
  const auto out = pretrain_link(m, data, quick(40));
  REQUIRE(out.result.train_loss.size() == 40);
  CHECK(out.result.train_loss.back() < 0.6 * out.result.train_loss.front());
}

TEST_CASE("the best validation epoch is restored") {
  const auto data = bundle_of(Task::Link, 6, 16, 8);
  GpsModel m(tiny_config(), 7);
  auto cfg = quick(30, 3e-2);
  cfg.patience = 5;
  std::vector<EpochRecord> records;
  const auto out = pretrain_link(m, data, cfg, [&](const EpochRecord& r) { records.push_back(r); });
  const auto& r = out.result;
  CHECK(r.epochs_run <= r.best_epoch + cfg.patience + 1);
  CHECK(r.valid_loss.size() == static_cast<std::size_t>(r.epochs_run));
  CHECK(r.best_valid_loss == doctest::Approx(*std::min_element(r.valid_loss.begin(), r.valid_loss.end())));
  CHECK(r.final_metrics.at("loss").get<double>() == doctest::Approx(r.best_valid_loss).epsilon(1e-9));
  CHECK(!records.empty());
  for (const auto& rec : records) CHECK((rec.split == "train" || rec.split == "valid"));
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto data = bundle_of(Task::Link, 8, 16, 8);
  auto cfg = tiny_config();
  cfg.dropout = 0.2;
  GpsModel a(cfg, 9);
  GpsModel b(cfg, 9);
  const auto ra = pretrain_link(a, data, quick(5)).result;
  const auto rb = pretrain_link(b, data, quick(5)).result;
  CHECK(ra.train_loss == rb.train_loss);
  CHECK(ra.valid_loss == rb.valid_loss);
  CHECK(hashes(a) == hashes(b));
}

TEST_CASE("head-only fine-tuning leaves the backbone untouched") {
  const auto link = bundle_of(Task::Link, 10, 16, 8);
  const auto reg = bundle_of(Task::EdgeRegression, 11, 16, 8, 0.3);
  GpsModel m(tiny_config(), 12);
  pretrain_link(m, link, quick(3));
  const auto before = hashes(m);
  const auto out = finetune(m, reg, quick(10), FreezeMode::HeadOnly);
  CHECK(out.result.epochs_run == 10);
  const auto after = hashes(m);
  int head_changed = 0;
  for (const auto& [name, h] : before) {
    if (GpsModel::is_head_parameter(name)) {
      head_changed += after.at(name) != h;
    } else {
      INFO(name);
      CHECK(after.at(name) == h);  // includes batch-norm running statistics
    }
  }
  CHECK(head_changed > 0);
  CHECK(m.freeze() == FreezeMode::None);
}

TEST_CASE("task checks and the divergence guard") {
  const auto link = bundle_of(Task::Link, 13, 8, 4);
  const auto node = bundle_of(Task::NodeRegression, 14, 8, 4, 0.5);
  GpsModel m(tiny_config(), 15);
  CHECK_THROWS_AS(finetune(m, link, quick(1), FreezeMode::None), std::invalid_argument);
  CHECK_THROWS_AS(pretrain_link(m, node, quick(1)), std::invalid_argument);
  CHECK_NOTHROW(train_node_regression(m, node, quick(2)));

  m.parameters().front()->value.setConstant(std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(pretrain_link(m, link, quick(2)), DivergenceError);
}
