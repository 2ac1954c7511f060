#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "crashwatch/evaluation.hpp"
#include "oracles.hpp"

using namespace crashwatch;

TEST_CASE("confusion counts by hand") {
  const std::vector<std::uint8_t> y{1, 0, 1, 0};
  const std::vector<double> p{0.9, 0.8, 0.2, 0.1};
  const Confusion c = confusion_at(y, p, 0.5);
  CHECK(c.tp == 1);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 1);
}

TEST_CASE("perfect scores leave no errors") {
  const std::vector<std::uint8_t> y{1, 0, 1, 0, 0};
  const std::vector<double> p{0.9, 0.1, 0.8, 0.2, 0.3};
  const Confusion c = confusion_at(y, p, 0.5);
  CHECK(c.fp == 0);
  CHECK(c.fn == 0);
  CHECK(balanced_accuracy(c) == 1.0);
}

TEST_CASE("a zero threshold predicts everything positive") {
  const std::vector<std::uint8_t> y{1, 0, 1};
  const std::vector<double> p{0.0, 0.4, 0.9};
  const Confusion c = confusion_at(y, p, 0.0);
  CHECK(c.tn == 0);
  CHECK(c.fn == 0);
  CHECK(c.tp == 2);
  CHECK(c.fp == 1);
}

TEST_CASE("prediction is positive exactly when p >= threshold") {
  const Confusion c = confusion_at({1, 1}, {0.5, 0.49999999}, 0.5);
  CHECK(c.tp == 1);
  CHECK(c.fn == 1);
}

TEST_CASE("confusion validates lengths") {
  CHECK_THROWS_AS(confusion_at({1, 0}, {0.5}, 0.5), Error);
}

TEST_CASE("inverse false alarm rate") {
  CHECK(inverse_false_alarm_rate({0, 0, 0, 5}) == 1.0);      // no false alarms
  CHECK(inverse_false_alarm_rate({0, 1, 0, 3}) == 0.75);     // 1 of 4 negatives flagged
  CHECK_FALSE(inverse_false_alarm_rate({3, 0, 2, 0}).has_value());  // no negatives at all
}

TEST_CASE("hit rate") {
  CHECK(hit_rate({4, 0, 0, 0}) == 1.0);
  CHECK(hit_rate({2, 0, 6, 0}) == 0.25);
  CHECK(hit_rate({0, 5, 3, 2}) == 0.0);
  CHECK_FALSE(hit_rate({0, 9, 0, 9}).has_value());  // no positives in truth
}

TEST_CASE("balanced accuracy averages the two recalls") {
  // TPR = 2/8 = 0.25, TNR = 0.9 -> 0.575
  CHECK(balanced_accuracy({2, 1, 6, 9}) == doctest::Approx(0.575).epsilon(1e-15));
  CHECK_FALSE(balanced_accuracy({0, 0, 0, 7}).has_value());  // single-class truth
  CHECK_FALSE(balanced_accuracy({0, 0, 0, 0}).has_value());
}

TEST_CASE("balanced accuracy of an all-negative predictor is one half") {
  const std::vector<std::uint8_t> y{1, 1, 0, 0, 0, 0};
  const std::vector<double> p(6, 0.0);
  const MetricsReport m = evaluate_predictions(y, p, 0.5);
  CHECK(m.bal_acc.value() == 0.5);
  CHECK(m.hit_rate.value() == 0.0);
  CHECK(m.ifar.value() == 1.0);
}

TEST_CASE("auc_prc of a perfect ranking is one") {
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  const std::vector<double> p{0.1, 0.2, 0.8, 0.9};
  CHECK(auc_prc(y, p) == 1.0);
}

TEST_CASE("auc_prc of a reversed two-point ranking is one half") {
  // Only the mispriced positive: at the top threshold precision 0, then 1/2.
  CHECK(auc_prc({1, 0}, {0.2, 0.8}) == 0.5);
}

TEST_CASE("auc_prc with constant scores is the prevalence") {
  const std::vector<std::uint8_t> y{1, 0, 0, 1, 0, 0, 0, 0, 0, 0};
  const std::vector<double> p(10, 0.7);
  CHECK(auc_prc(y, p) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("auc_prc requires a positive example") {
  try {
    auc_prc({0, 0, 0}, {0.1, 0.2, 0.3});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Err::NoPositives);
  }
}

TEST_CASE("auc_prc matches the exhaustive threshold sweep on random data") {
  Rng rng(123);
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = 2 + static_cast<int>(rng.below(199));
    std::vector<std::uint8_t> y(static_cast<std::size_t>(n), 0);
    std::vector<double> p(static_cast<std::size_t>(n), 0.0);
    bool any_pos = false;
    for (int i = 0; i < n; ++i) {
      y[static_cast<std::size_t>(i)] = rng.uniform() < 0.3 ? 1 : 0;
      any_pos |= y[static_cast<std::size_t>(i)] != 0;
      // Half the time quantize scores to force heavy ties.
      p[static_cast<std::size_t>(i)] =
          rep % 2 == 0 ? rng.uniform() : std::floor(rng.uniform() * 8.0) / 8.0;
    }
    if (!any_pos) y[0] = 1;
    const double got = auc_prc(y, p);
    const double want = oracle::average_precision(y, p);
    CHECK(std::abs(got - want) <= 1e-12);
  }
}

TEST_CASE("auc_prc is invariant under strictly increasing score transforms") {
  Rng rng(7);
  std::vector<std::uint8_t> y;
  std::vector<double> p, q;
  for (int i = 0; i < 120; ++i) {
    y.push_back(rng.uniform() < 0.25 ? 1 : 0);
    const double v = rng.uniform();
    p.push_back(v);
    q.push_back(std::tanh(3.0 * v) + 2.0);  // strictly increasing
  }
  y[0] = 1;
  CHECK(auc_prc(y, p) == doctest::Approx(auc_prc(y, q)).epsilon(1e-12));
}

TEST_CASE("pr_curve thresholds descend over distinct scores") {
  const std::vector<std::uint8_t> y{1, 0, 1, 1, 0};
  const std::vector<double> p{0.9, 0.9, 0.7, 0.3, 0.1};
  const auto curve = pr_curve(y, p);
  REQUIRE(curve.size() == 4);  // tied 0.9 collapses into one step
  for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].threshold < curve[i - 1].threshold);
  CHECK(curve[0].threshold == 0.9);
  CHECK(curve[0].precision == 0.5);
  CHECK(curve[0].recall == doctest::Approx(1.0 / 3.0));
  CHECK(curve.back().recall == 1.0);
}

TEST_CASE("evaluate_predictions fills every defined metric") {
  const std::vector<std::uint8_t> y{1, 0, 1, 0};
  const std::vector<double> p{0.9, 0.8, 0.2, 0.1};
  const MetricsReport m = evaluate_predictions(y, p, 0.5);
  CHECK(m.counts.tp == 1);
  CHECK(m.ifar.value() == 0.5);
  CHECK(m.hit_rate.value() == 0.5);
  CHECK(m.bal_acc.value() == 0.5);
  CHECK(m.auc_prc.value() == doctest::Approx(oracle::average_precision(y, p)));
  CHECK(m.threshold == 0.5);
}

TEST_CASE("undefined metrics serialize as NOT_DEFINED in csv and null in json") {
  const std::vector<std::uint8_t> y{0, 0};
  const std::vector<double> p{0.9, 0.1};
  const MetricsReport m = evaluate_predictions(y, p, 0.5);
  CHECK_FALSE(m.hit_rate.has_value());
  CHECK_FALSE(m.auc_prc.has_value());  // no positives, so the curve is undefined

  CHECK(metrics_csv_header() == "ifar,hit_rate,bal_acc,auc_prc,tp,fp,fn,tn,threshold");
  CHECK(metrics_csv_row(m) == "0.5,NOT_DEFINED,NOT_DEFINED,NOT_DEFINED,0,1,0,1,0.5");

  const std::string js = metrics_json(m);
  CHECK(js.find("\"hit_rate\":null") != std::string::npos);
  CHECK(js.find("\"auc_prc\":null") != std::string::npos);
  CHECK(js.find("\"ifar\":0.5") != std::string::npos);
}

TEST_CASE("defined metrics serialize with full precision") {
  const std::vector<std::uint8_t> y{1, 0, 1, 0};
  const std::vector<double> p{0.9, 0.8, 0.2, 0.1};
  const MetricsReport m = evaluate_predictions(y, p, 0.5);
  const std::string row = metrics_csv_row(m);
  CHECK(row.substr(0, 12) == "0.5,0.5,0.5,");
  CHECK(row.find(",1,1,1,1,0.5") != std::string::npos);
}
