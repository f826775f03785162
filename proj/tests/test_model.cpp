#include <doctest.h>

#include <numeric>

#include "support.hpp"

using namespace cirgps;
using testsupport::random_subgraph;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d0 = 8;
  c.d_pe = 4;
  c.layers = 2;
  c.heads = 2;
  c.max_dist = 4;
  c.dropout = 0.0;
  return c;
}

GraphBatch batch_of(const std::vector<EnclosingSubgraph>& sgs, int max_dist) {
  return collate(std::span<const EnclosingSubgraph>(sgs), max_dist, StatsNormalizer{});
}

double eval_score(GpsModel& m, const EnclosingSubgraph& sg) {
  std::vector<EnclosingSubgraph> one{sg};
  return m.predict(batch_of(one, m.config().max_dist))[0];
}

}  // namespace

TEST_CASE("input widths follow the concatenation") {
  ModelConfig c = small_config();
  GpsModel m(c, 1);
  Rng rng(2);
  std::vector<EnclosingSubgraph> sgs{random_subgraph(rng, 7)};
  ActivationTrace trace;
  ad::Tape tape;
  m.forward(tape, batch_of(sgs, c.max_dist), false, nullptr, &trace);
  CHECK(trace.x[0].cols() == 16);
  CHECK(trace.x[0].rows() == 7);
  CHECK(trace.e[0].rows() == static_cast<Eigen::Index>(sgs[0].edges.size()));
  REQUIRE(trace.x.size() == 3);
  CHECK(trace.pooled.rows() == 1);
  for (const auto& layer : trace.attention) {
    for (const auto& p : layer) {
      for (Eigen::Index r = 0; r < p.rows(); ++r) CHECK(p.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero embedding tables give a zero first-layer input") {
  GpsModel m(small_config(), 3);
  for (const char* name : {"embed.node", "embed.dspd_m", "embed.dspd_n"}) m.param(name).value.setZero();
  Rng rng(4);
  std::vector<EnclosingSubgraph> sgs{random_subgraph(rng, 9)};
  ActivationTrace trace;
  ad::Tape tape;
  m.forward(tape, batch_of(sgs, 4), false, nullptr, &trace);
  CHECK(trace.x[0].isZero(0.0));
}

TEST_CASE("zeroed task head scores 0.5") {
  GpsModel m(small_config(), 5);
  m.zero_task_head();
  Rng rng(6);
  CHECK(eval_score(m, random_subgraph(rng, 10)) == 0.5);
}

TEST_CASE("eval forward is permutation invariant and deterministic") {
  GpsModel m(small_config(), 7);
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto sg = random_subgraph(rng, 6 + trial % 7);
    std::vector<int> perm(sg.num_nodes());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<int>(perm));
    const double a = eval_score(m, sg);
    CHECK(std::abs(a - eval_score(m, testsupport::permute(sg, perm))) < 1e-6);
    CHECK(a == eval_score(m, sg));
  }
}

TEST_CASE("batched eval equals single forwards") {
  GpsModel m(small_config(), 9);
  Rng rng(10);
  std::vector<EnclosingSubgraph> sgs;
  for (int k = 0; k < 5; ++k) sgs.push_back(random_subgraph(rng, 6 + k));
  const auto batched = m.predict(batch_of(sgs, 4));
  for (std::size_t k = 0; k < sgs.size(); ++k) CHECK(std::abs(batched[k] - eval_score(m, sgs[k])) < 1e-12);
}

TEST_CASE("single node subgraph pools to x plus c") {
  GpsModel m(small_config(), 11);
  Rng rng(12);
  auto sg = random_subgraph(rng, 1, true);
  ActivationTrace trace;
  ad::Tape tape;
  std::vector<EnclosingSubgraph> one{sg};
  m.forward(tape, batch_of(one, 4), false, nullptr, &trace);
  CHECK(trace.pooled.rows() == 1);
  CHECK(trace.pooled.allFinite());
}

TEST_CASE("duplicating a subgraph leaves the pooled vector unchanged") {
  auto c = small_config();
  GpsModel m(c, 13);
  Rng rng(14);
  const auto sg = random_subgraph(rng, 8);
  // Two disjoint copies merged into one subgraph: every node keeps its
  // neighbourhood, so mean pooling must not move.
  EnclosingSubgraph twice = sg;
  const int n = static_cast<int>(sg.num_nodes());
  twice.stats.resize(2 * n, kStatsDim);
  twice.stats << sg.stats, sg.stats;
  for (int i = 0; i < n; ++i) {
    twice.nodes.push_back(n + i);
    twice.names.push_back(sg.names[i] + "'");
    twice.node_types.push_back(sg.node_types[i]);
    twice.dspd.rows.push_back(sg.dspd.rows[i]);
  }
  for (const auto& e : sg.edges) twice.edges.push_back({e.src + n, e.dst + n, e.type});
  // Attention mixes across the copies, but with identical copies each row's
  // softmax is a rescaled version of the single-copy one, so values match.
  ActivationTrace t1;
  ActivationTrace t2;
  ad::Tape a;
  ad::Tape b;
  std::vector<EnclosingSubgraph> one{sg};
  std::vector<EnclosingSubgraph> two{twice};
  m.forward(a, batch_of(one, 4), false, nullptr, &t1);
  m.forward(b, batch_of(two, 4), false, nullptr, &t2);
  CHECK((t1.pooled - t2.pooled).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("gradients match central differences") {
  auto c = small_config();
  for (bool mpnn : {true, false}) {
    for (bool attn : {true, false}) {
      c.use_mpnn = mpnn;
      c.use_attention = attn;
      GpsModel m(c, 21);
      Rng rng(22);
      std::vector<EnclosingSubgraph> sgs{random_subgraph(rng, 6), random_subgraph(rng, 9)};
      const auto batch = batch_of(sgs, c.max_dist);
      auto loss = [&](ad::Tape& t) { return ad::bce_with_logits(m.forward(t, batch, true, nullptr), batch.labels); };
      for (const auto& g : testsupport::check_gradients(m, loss)) {
        INFO(g.name);
        CHECK(g.rel_error < 1e-4);
      }
    }
  }
}

TEST_CASE("checkpoint round trip and shape mismatch") {
  auto c = small_config();
  GpsModel m(c, 31);
  const auto path = std::filesystem::temp_directory_path() / "cirgps_test.ckpt";
  m.save(path, {{"note", "x"}}, "state");
  auto loaded = GpsModel::load(path);
  for (const auto* p : m.parameters()) CHECK(tensor_hash(*p) == tensor_hash(loaded.model->param(p->name)));
  CHECK(loaded.rng_state == "state");
  CHECK(loaded.manifest.at("note") == "x");

  // Same names, different width: loading into this model must refuse.
  auto c2 = c;
  c2.d0 = 10;
  GpsModel other(c2, 1);
  other.save(path, {}, "");
  CHECK(GpsModel::load(path).model->config().d0 == 10);
  CHECK_THROWS_AS(m.load_weights(path), ModelError);
  std::filesystem::remove(path);
}

TEST_CASE("default widths land near the reference parameter count") {
  GpsModel m(ModelConfig{}, 1);
  const double count = static_cast<double>(m.parameter_count());
  CHECK(count > 540337 * 0.8);
  CHECK(count < 540337 * 1.2);
}
