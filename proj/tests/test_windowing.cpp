#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "crashwatch/windowing.hpp"

using namespace crashwatch;

namespace {

// Panel whose single feature is the row index, which makes window contents
// directly auditable.
FeaturePanel index_panel(int n) {
  FeaturePanel p;
  Series idx;
  for (int i = 0; i < n; ++i) {
    p.dates.push_back(Date{18300 + i});
    idx.push_back(static_cast<double>(i));
  }
  p.add_column("row_index", idx);
  return p;
}

LabelSeries labels_for(const FeaturePanel& p, const std::vector<std::uint8_t>& y) {
  LabelSeries ls;
  ls.dates = p.dates;
  ls.labels = y;
  ls.return_missing.assign(y.size(), 0);
  ls.scenario = {0.05, -0.02};
  return ls;
}

WindowTensor random_tensor(std::int64_t n, std::int64_t t, std::int64_t f, std::uint64_t seed) {
  WindowTensor w;
  w.n = n;
  w.t = t;
  w.f = f;
  Rng rng(seed);
  w.values.resize(static_cast<std::size_t>(n * t * f));
  for (auto& v : w.values) v = rng.normal() * 3.0 + 1.0;
  for (std::int64_t i = 0; i < n; ++i) {
    w.sample_dates.push_back(Date{18400 + static_cast<int>(i)});
    w.labels.push_back(rng.uniform() < 0.3 ? 1 : 0);
  }
  for (std::int64_t j = 0; j < f; ++j) w.feature_names.push_back("f" + std::to_string(j));
  return w;
}

std::vector<std::int64_t> iota_idx(std::int64_t n) {
  std::vector<std::int64_t> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), std::int64_t{0});
  return v;
}

}  // namespace

TEST_CASE("eight complete rows with seven timesteps yield exactly one sample") {
  const FeaturePanel p = index_panel(8);
  const WindowTensor w = make_windows(p, labels_for(p, {0, 0, 0, 0, 0, 0, 0, 1}), 7);
  REQUIRE(w.n == 1);
  CHECK(w.t == 7);
  CHECK(w.f == 1);
  CHECK(w.sample_dates[0] == p.dates[7]);
  CHECK(w.labels[0] == 1);
}

TEST_CASE("windows contain the strictly prior rows oldest to newest") {
  const FeaturePanel p = index_panel(12);
  std::vector<std::uint8_t> y(12, 0);
  const WindowTensor w = make_windows(p, labels_for(p, y), 7);
  REQUIRE(w.n == 5);
  for (std::int64_t i = 0; i < w.n; ++i) {
    const double sample_row = static_cast<double>(7 + i);
    for (std::int64_t step = 0; step < 7; ++step) {
      // Row index at the sample date itself never leaks into its window.
      CHECK(w.at(i, step, 0) == sample_row - 7.0 + static_cast<double>(step));
      CHECK(w.at(i, step, 0) < sample_row);
    }
  }
}

TEST_CASE("window count matches a brute-force scan when the panel has gaps") {
  FeaturePanel p = index_panel(300);
  Series with_gaps = p.cols[0];
  for (const int g : {40, 41, 120, 250}) with_gaps[static_cast<std::size_t>(g)] = kMissing;
  p.cols[0] = with_gaps;
  std::vector<std::uint8_t> y(300, 0);
  const int t = 7;
  const WindowTensor w = make_windows(p, labels_for(p, y), t);

  std::int64_t expected = 0;
  std::vector<Date> expected_dates;
  for (int i = t; i < 300; ++i) {
    bool ok = true;
    for (int back = i - t; back < i; ++back) ok &= !is_missing(with_gaps[static_cast<std::size_t>(back)]);
    if (ok) {
      ++expected;
      expected_dates.push_back(p.dates[static_cast<std::size_t>(i)]);
    }
  }
  CHECK(w.n == expected);
  CHECK(w.sample_dates == expected_dates);
  // A gap knocks out the following t windows: 4 gaps, two adjacent.
  CHECK(w.n == 300 - t - (t + 1) - t - t);
}

TEST_CASE("a sample date with missing return still yields a window labeled 0") {
  const FeaturePanel p = index_panel(9);
  LabelSeries ls = labels_for(p, std::vector<std::uint8_t>(9, 0));
  ls.return_missing[8] = 1;
  const WindowTensor w = make_windows(p, ls, 7);
  CHECK(w.n == 2);
  CHECK(w.labels[1] == 0);
}

TEST_CASE("make_windows validates inputs") {
  const FeaturePanel p = index_panel(10);
  LabelSeries shifted = labels_for(p, std::vector<std::uint8_t>(10, 0));
  shifted.dates[3] = Date{shifted.dates[3].days + 1};
  try {
    make_windows(p, shifted, 7);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Err::DateMismatch);
  }
  LabelSeries shorter = labels_for(p, std::vector<std::uint8_t>(10, 0));
  shorter.dates.pop_back();
  shorter.labels.pop_back();
  CHECK_THROWS_AS(make_windows(p, shorter, 7), Error);
  CHECK_THROWS_AS(make_windows(p, labels_for(p, std::vector<std::uint8_t>(10, 0)), 0), Error);
}

TEST_CASE("flatten keeps values and names aligned") {
  const WindowTensor w = random_tensor(4, 3, 2, 1);
  const Matrix m = flatten_windows(w);
  CHECK(m.rows == 4);
  CHECK(m.cols == 6);
  const auto names = flat_feature_names(w);
  REQUIRE(names.size() == 6);
  // Oldest timestep first = highest lag number; lag 1 is the newest step.
  CHECK(names[0] == "f0@3");
  CHECK(names[1] == "f1@3");
  CHECK(names[4] == "f0@1");
  CHECK(names[5] == "f1@1");
  for (std::int64_t i = 0; i < 4; ++i) {
    for (std::int64_t step = 0; step < 3; ++step) {
      for (std::int64_t feat = 0; feat < 2; ++feat) {
        CHECK(m(i, step * 2 + feat) == w.at(i, step, feat));
      }
    }
  }
}

TEST_CASE("flatten of a one-by-one window is the identity") {
  const WindowTensor w = random_tensor(5, 1, 1, 2);
  const Matrix m = flatten_windows(w);
  CHECK(m.cols == 1);
  for (std::int64_t i = 0; i < 5; ++i) CHECK(m(i, 0) == w.at(i, 0, 0));
  CHECK(flat_feature_names(w)[0] == "f0@1");
}

TEST_CASE("standardizer makes the training block mean zero and unit variance") {
  const WindowTensor w = random_tensor(40, 7, 3, 3);
  const auto train = iota_idx(30);
  const Standardizer s = fit_standardizer(w, train);
  CHECK(s.n_kept == 3);
  const WindowTensor z = apply_standardizer(w, s);
  for (std::int64_t feat = 0; feat < 3; ++feat) {
    double sum = 0.0, ss = 0.0;
    const double count = 30.0 * 7.0;
    for (std::int64_t i = 0; i < 30; ++i) {
      for (std::int64_t step = 0; step < 7; ++step) {
        sum += z.at(i, step, feat);
        ss += z.at(i, step, feat) * z.at(i, step, feat);
      }
    }
    CHECK(std::abs(sum / count) < 1e-9);
    CHECK(std::abs(ss / count - 1.0) < 1e-9);
  }
}

TEST_CASE("standardizer maps a known mean and spread to zero and one") {
  WindowTensor w = random_tensor(2, 1, 1, 4);
  w.values = {8.0, 12.0};  // mean 10, population std 2
  const Standardizer s = fit_standardizer(w, {0, 1});
  CHECK(s.mean[0] == 10.0);
  CHECK(s.stddev[0] == 2.0);
  const WindowTensor z = apply_standardizer(w, s);
  CHECK(z.at(0, 0, 0) == -1.0);
  CHECK(z.at(1, 0, 0) == 1.0);
}

TEST_CASE("standardizer statistics come from the training rows only") {
  WindowTensor w = random_tensor(20, 2, 2, 5);
  const auto train = iota_idx(10);
  const Standardizer before = fit_standardizer(w, train);
  // Corrupt the non-training rows; the fit must not move.
  for (std::int64_t i = 10; i < 20; ++i) {
    for (std::int64_t step = 0; step < 2; ++step) {
      for (std::int64_t feat = 0; feat < 2; ++feat) w.at(i, step, feat) = 1e9;
    }
  }
  const Standardizer after = fit_standardizer(w, train);
  CHECK(before.mean == after.mean);
  CHECK(before.stddev == after.stddev);

  // Test rows transform with the train statistics.
  const WindowTensor z = apply_standardizer(w, after);
  CHECK(z.at(15, 0, 0) == (1e9 - after.mean[0]) / after.stddev[0]);
}

TEST_CASE("zero-variance features are dropped and recorded") {
  WindowTensor w = random_tensor(6, 2, 3, 6);
  for (std::int64_t i = 0; i < 6; ++i) {
    for (std::int64_t step = 0; step < 2; ++step) w.at(i, step, 1) = 5.0;  // constant feature
  }
  const Standardizer s = fit_standardizer(w, iota_idx(6));
  CHECK(s.kept == std::vector<std::uint8_t>{1, 0, 1});
  CHECK(s.n_kept == 2);
  CHECK(s.kept_names == std::vector<std::string>{"f0", "f2"});
  const WindowTensor z = apply_standardizer(w, s);
  CHECK(z.f == 2);
  CHECK(z.feature_names == s.kept_names);

  WindowTensor wrong = random_tensor(3, 2, 5, 7);
  CHECK_THROWS_AS(apply_standardizer(wrong, s), Error);
  CHECK_THROWS_AS(fit_standardizer(w, {}), Error);
}

TEST_CASE("subset_windows picks exactly the requested samples") {
  const WindowTensor w = random_tensor(10, 3, 2, 8);
  const WindowTensor sub = subset_windows(w, {7, 2, 9});
  REQUIRE(sub.n == 3);
  CHECK(sub.sample_dates[0] == w.sample_dates[7]);
  CHECK(sub.labels[1] == w.labels[2]);
  for (std::int64_t step = 0; step < 3; ++step) {
    for (std::int64_t feat = 0; feat < 2; ++feat) {
      CHECK(sub.at(0, step, feat) == w.at(7, step, feat));
      CHECK(sub.at(2, step, feat) == w.at(9, step, feat));
    }
  }
  CHECK_THROWS_AS(subset_windows(w, {10}), Error);
}

TEST_CASE("tensor files round-trip bit-exact") {
  const WindowTensor w = random_tensor(17, 7, 4, 9);
  const std::string path = "/tmp/crashwatch_tensor_roundtrip.bin";
  save_tensor(w, path);
  const WindowTensor r = load_tensor(path);
  CHECK(r.n == w.n);
  CHECK(r.t == w.t);
  CHECK(r.f == w.f);
  CHECK(r.values == w.values);
  CHECK(r.sample_dates == w.sample_dates);
  CHECK(r.labels == w.labels);
  CHECK(r.feature_names == w.feature_names);

  // Saving the reloaded tensor reproduces the file byte for byte.
  const std::string again = "/tmp/crashwatch_tensor_roundtrip2.bin";
  save_tensor(r, again);
  CHECK(read_file(path) == read_file(again));
}

TEST_CASE("load_tensor rejects truncated payloads") {
  const WindowTensor w = random_tensor(3, 2, 2, 10);
  const std::string path = "/tmp/crashwatch_tensor_truncated.bin";
  save_tensor(w, path);
  std::string blob = read_file(path);
  blob.resize(blob.size() - 8);
  write_file(path, blob);
  try {
    load_tensor(path);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Err::Io);
  }
}
