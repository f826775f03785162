#include <doctest.h>

#include <cmath>

#include "cirgps/metrics.hpp"
#include "cirgps/normalize.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace cirgps;

TEST_CASE("target normalizer mapping") {
  const TargetNormalizer t;
  CHECK(t.forward(1e-21).value() == doctest::Approx(0.0));
  CHECK(t.forward(1e-15).value() == doctest::Approx(1.0));
  CHECK(t.forward(1e-18).value() == doctest::Approx((-18.0 + 21.0) / 6.0));
  CHECK_FALSE(t.forward(1e-14).has_value());
  CHECK_FALSE(t.forward(1e-22).has_value());
  CHECK(t.forward(0.0).value() == 0.0);
  CHECK_THROWS_AS(TargetNormalizer(1e-15, 1e-15), std::invalid_argument);
  CHECK_THROWS_AS(TargetNormalizer(1e-15, 1e-21), std::invalid_argument);

  Rng rng(1);
  double prev = -1.0;
  for (int i = 0; i <= 2000; ++i) {
    const double y = std::pow(10.0, -21.0 + 6.0 * i / 2000.0);
    const double x = *t.forward(y);
    CHECK(x >= prev);  // monotone
    prev = x;
    CHECK(std::abs(t.inverse(x) - y) / y < 1e-12);
  }
  const auto back = TargetNormalizer::from_json(TargetNormalizer(1e-20, 1e-16).to_json());
  CHECK(back.lo() == 1e-20);
  CHECK(back.hi() == 1e-16);
}

TEST_CASE("normalize_targets drops out-of-range links") {
  std::vector<TargetLink> links{{0, 1, EdgeType::NetNet, Polarity::Positive, 1e-18},
                                {0, 2, EdgeType::NetNet, Polarity::Positive, 1e-14},
                                {0, 3, EdgeType::NetNet, Polarity::Negative, 0.0},
                                {0, 4, EdgeType::NetNet, Polarity::Positive, 1e-21}};
  const auto n = normalize_targets(links, TargetNormalizer{});
  CHECK(n.dropped == 1);
  REQUIRE(n.kept.size() == 3);
  CHECK(n.values[0] == doctest::Approx(0.5));
  CHECK(n.values[1] == 0.0);
  CHECK(n.values[2] == doctest::Approx(0.0));
}

TEST_CASE("stats normalizer fits on train rows only") {
  StatsMatrix train = StatsMatrix::Zero(3, kStatsDim);
  std::vector<NodeType> types{NodeType::Net, NodeType::Net, NodeType::Pin};
  train(0, 0) = 0.0;
  train(1, 0) = 4.0;
  train(0, 1) = train(1, 1) = 7.0;  // constant
  train(2, 0) = 3.0;                // pin code
  StatsNormalizer norm;
  norm.fit(train, types);
  const auto t = norm.apply(train, types);
  CHECK(t(0, 0) == 0.0);
  CHECK(t(1, 0) == 1.0);
  CHECK(t(0, 1) == 0.0);
  CHECK(t(1, 1) == 0.0);
  CHECK(t(2, 0) == 3.0);  // pin codes stay categorical
  CHECK(t.topRows(2).minCoeff() >= 0.0);
  CHECK(t.topRows(2).maxCoeff() <= 1.0);

  StatsMatrix test = StatsMatrix::Zero(1, kStatsDim);
  test(0, 0) = 8.0;
  const std::vector<NodeType> net{NodeType::Net};
  CHECK(norm.apply(test, net)(0, 0) == 1.0);
  test(0, 0) = -3.0;
  CHECK(norm.apply(test, net)(0, 0) == 0.0);
  test(0, 0) = 1.0;
  CHECK(norm.apply(test, net)(0, 0) == 0.25);

  const auto again = StatsNormalizer::from_json(norm.to_json());
  CHECK(again.apply(train, types) == t);
}

TEST_CASE("perfectly separated scores") {
  const std::vector<double> s{0.9, 0.8, 0.7, 0.2, 0.1};
  const std::vector<double> y{1, 1, 1, 0, 0};
  const auto m = classification_metrics(s, y);
  CHECK(m.accuracy == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.auc == 1.0);
  CHECK(std::isnan(roc_auc(s, std::vector<double>(5, 1.0))));
  CHECK_THROWS_AS(classification_metrics({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(regression_metrics(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("shuffled labels give chance-level auc") {
  Rng rng(12);
  std::vector<double> s, y;
  for (int i = 0; i < 20000; ++i) {
    s.push_back(rng.uniform());
    y.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
  }
  CHECK(roc_auc(s, y) == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("metrics agree with brute-force oracles on random cases") {
  Rng rng(31337);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto c = oracles::random_case(rng);
    const auto m = classification_metrics(c.scores, c.labels);
    const auto o = oracles::classification(c.scores, c.labels);
    REQUIRE(std::abs(m.accuracy - o.accuracy) <= 1e-9);
    REQUIRE(std::abs(m.f1 - o.f1) <= 1e-9);
    if (std::isnan(o.auc)) {
      REQUIRE(std::isnan(m.auc));
    } else {
      REQUIRE(std::abs(m.auc - o.auc) <= 1e-9);
    }
    const auto r = regression_metrics(c.predictions, c.targets);
    const auto ro = oracles::regression(c.predictions, c.targets);
    REQUIRE(std::abs(r.mae - ro.mae) <= 1e-9);
    REQUIRE(std::abs(r.rmse - ro.rmse) <= 1e-9);
    REQUIRE(std::abs(r.r2 - ro.r2) <= 1e-9);
    CHECK(r.rmse >= r.mae);
  }
}
