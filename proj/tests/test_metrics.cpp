#include <doctest.h>

#include <cmath>

#include "dfil/errors.hpp"
#include "dfil/metrics.hpp"
#include "dfil/oracles.hpp"
#include "dfil/rng.hpp"
#include "dfil/verify.hpp"

using namespace dfil;

TEST_CASE("accuracy percentage") {
  CHECK(acc({1, 0, 1}, {1, 0, 1}) == 100.0);
  CHECK(acc({1, 0, 1}, {0, 1, 0}) == 0.0);
  CHECK(acc({1, 0, 1, 1}, {1, 0, 0, 1}) == 75.0);
  CHECK_THROWS_AS(acc({}, {}), ParameterError);
  CHECK_THROWS_AS(acc({1}, {1, 0}), ParameterError);
}

TEST_CASE("matrix shape discipline") {
  AccuracyMatrix m;
  m.push_row({50.0});
  CHECK_THROWS_AS(m.push_row({50.0}), StateError);       // needs 2 entries
  CHECK_THROWS_AS(m.push_row({1.0, 2.0, 3.0}), StateError);
  CHECK_THROWS_AS(m.push_row({50.0, 101.0}), ParameterError);
  m.push_row({60.0, 70.0});
  CHECK(m.at(2, 1) == 60.0);
  CHECK_THROWS_AS(m.at(1, 2), StateError);  // upper triangle
  CHECK_THROWS_AS(m.at(3, 1), StateError);  // row not recorded yet
}

TEST_CASE("average accuracy reproduces the reference row value") {
  AccuracyMatrix m;
  m.push_row({0.0});
  m.push_row({0.0, 0.0});
  m.push_row({0.0, 0.0, 0.0});
  m.push_row({66.34, 62.16, 73.56, 81.13});
  CHECK(std::abs(average_accuracy(m, 4) - 70.79) <= 0.01);
}

TEST_CASE("average accuracy basics") {
  AccuracyMatrix m;
  m.push_row({87.5});
  CHECK(average_accuracy(m, 1) == 87.5);  // single task

  AccuracyMatrix constant;
  constant.push_row({64.0});
  constant.push_row({64.0, 64.0});
  constant.push_row({64.0, 64.0, 64.0});
  CHECK(average_accuracy(constant, 3) == doctest::Approx(64.0).epsilon(1e-15));

  CHECK_THROWS_AS(average_accuracy(m, 2), StateError);
}

TEST_CASE("average accuracy is order-free in the row") {
  AccuracyMatrix a, b;
  a.push_row({10.0});
  a.push_row({10.0, 20.0});
  a.push_row({30.0, 10.0, 50.0});
  b.push_row({10.0});
  b.push_row({10.0, 20.0});
  b.push_row({50.0, 30.0, 10.0});
  CHECK(average_accuracy(a, 3) == average_accuracy(b, 3));
}

TEST_CASE("average forgetting") {
  AccuracyMatrix none;
  none.push_row({80.0});
  none.push_row({80.0, 90.0});
  none.push_row({80.0, 90.0, 70.0});
  CHECK(average_forgetting(none, 3) == 0.0);

  AccuracyMatrix two;
  two.push_row({95.0});
  two.push_row({89.0, 85.0});
  CHECK(average_forgetting(two, 2) == 6.0);

  CHECK_THROWS_AS(average_forgetting(two, 1), ParameterError);
  CHECK_THROWS_AS(average_forgetting(two, 3), StateError);
}

TEST_CASE("backward transfer yields negative forgetting, unclamped") {
  AccuracyMatrix m;
  m.push_row({70.0});
  m.push_row({85.0, 80.0});  // task 1 improved after task 2
  CHECK(average_forgetting(m, 2) == -15.0);
}

TEST_CASE("auc trivial cases") {
  CHECK(auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
  CHECK(auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == 0.5);  // all ties
  CHECK(auc({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0}) == 0.0);  // inverted
  CHECK_THROWS_AS(auc({0.1, 0.2}, {1, 1}), MetricError);
}

TEST_CASE("pairwise count equals trapezoidal integration") {
  Rng rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 24;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = rng.uniform();
      if (trial % 2 == 0) scores[i] = std::round(scores[i] * 10.0) / 10.0;
      labels[i] = i % 3 == 0 ? 1 : 0;
    }
    CHECK(std::abs(auc(scores, labels) -
                   oracle::reference_auc_trapezoid(scores, labels)) < 1e-12);
  }
}

TEST_CASE("auc is invariant under strictly monotone score transforms") {
  Rng rng(78);
  const std::size_t n = 30;
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = rng.uniform(-2.0, 2.0);
    labels[i] = static_cast<int>(rng.below(2));
  }
  labels[0] = 0;
  labels[1] = 1;
  const double base = auc(scores, labels);

  std::vector<double> shifted(n), expd(n), cubed(n);
  for (std::size_t i = 0; i < n; ++i) {
    shifted[i] = 3.0 * scores[i] + 11.0;
    expd[i] = std::exp(scores[i]);
    cubed[i] = scores[i] * scores[i] * scores[i];
  }
  CHECK(auc(shifted, labels) == base);
  CHECK(auc(expd, labels) == base);
  CHECK(auc(cubed, labels) == base);
}

TEST_CASE("metric verification suite passes") {
  for (const CheckResult& r : verify_metrics()) {
    INFO(r.name, " ", r.detail);
    CHECK(r.pass);
  }
}
