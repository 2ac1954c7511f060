#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "crashwatch/resampling.hpp"

using namespace crashwatch;

namespace {

// Two Gaussian blobs at +/- center with the requested class counts.
void make_blobs(Matrix& x, std::vector<std::uint8_t>& y, int n0, int n1, double center, double spread,
                std::uint64_t seed) {
  Rng rng(seed);
  x = Matrix(n0 + n1, 2);
  y.assign(static_cast<std::size_t>(n0 + n1), 0);
  for (int i = 0; i < n0 + n1; ++i) {
    const bool one = i >= n0;
    y[static_cast<std::size_t>(i)] = one ? 1 : 0;
    x(i, 0) = (one ? center : -center) + spread * rng.normal();
    x(i, 1) = (one ? center : -center) + spread * rng.normal();
  }
}

double minority_share(const std::vector<std::uint8_t>& y) {
  const auto ones = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const double n = static_cast<double>(y.size());
  return std::min(ones, n - ones) / n;
}

}  // namespace

TEST_CASE("smote on a balanced set adds nothing") {
  Matrix x;
  std::vector<std::uint8_t> y;
  make_blobs(x, y, 6, 6, 5.0, 0.3, 1);
  const SmoteResult r = smote(x, y, {5, 3, 1.0, 0});
  CHECK(r.x.rows == 12);
  CHECK(r.y == y);
  CHECK(std::count(r.provenance.begin(), r.provenance.end(), Provenance::Synthetic) == 0);
}

TEST_CASE("smote keeps the original rows verbatim and in order") {
  Matrix x;
  std::vector<std::uint8_t> y;
  make_blobs(x, y, 9, 4, 3.0, 0.5, 2);
  const SmoteResult r = smote(x, y, {3, 3, 1.0, 7});
  REQUIRE(r.x.rows == 9 + 9);  // 5 synthetics to reach the majority count
  for (std::int64_t i = 0; i < 13; ++i) {
    CHECK(r.provenance[static_cast<std::size_t>(i)] == Provenance::Original);
    CHECK(r.origin[static_cast<std::size_t>(i)] == i);
    CHECK(r.y[static_cast<std::size_t>(i)] == y[static_cast<std::size_t>(i)]);
    for (std::int64_t j = 0; j < 2; ++j) CHECK(r.x(i, j) == x(i, j));
  }
  for (std::size_t i = 13; i < 18; ++i) {
    CHECK(r.provenance[i] == Provenance::Synthetic);
    CHECK(r.origin[i] == -1);
    CHECK(r.y[i] == 1);
  }
}

TEST_CASE("synthetics between two identical minority rows equal that point") {
  Matrix x(6, 2);
  std::vector<std::uint8_t> y{0, 0, 0, 0, 1, 1};
  for (int i = 0; i < 4; ++i) {
    x(i, 0) = -10.0 + i;
    x(i, 1) = -10.0 - i;
  }
  x(4, 0) = 5.0; x(4, 1) = 5.0;
  x(5, 0) = 5.0; x(5, 1) = 5.0;
  const SmoteResult r = smote(x, y, {1, 3, 1.0, 11});
  REQUIRE(r.x.rows == 8);
  for (std::int64_t i = 6; i < 8; ++i) {
    CHECK(r.x(i, 0) == 5.0);
    CHECK(r.x(i, 1) == 5.0);
  }
}

TEST_CASE("synthetics are convex combinations of minority neighbours") {
  Matrix x(10, 2);
  std::vector<std::uint8_t> y(10, 0);
  // Minority at (0,0) and (1,1); majority far away on a line.
  y[8] = 1;
  y[9] = 1;
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = 50.0 + i;
    x(i, 1) = -50.0 - i;
  }
  x(8, 0) = 0.0; x(8, 1) = 0.0;
  x(9, 0) = 1.0; x(9, 1) = 1.0;
  const SmoteResult r = smote(x, y, {1, 3, 1.0, 5});
  REQUIRE(r.x.rows == 16);  // 6 synthetics
  for (std::int64_t i = 10; i < 16; ++i) {
    const double u = r.x(i, 0);  // x = 0 + u*(1-0) on both axes
    CHECK(u >= -1e-9);
    CHECK(u <= 1.0 + 1e-9);
    CHECK(std::abs(r.x(i, 1) - u) <= 1e-9);
    CHECK(r.y[static_cast<std::size_t>(i)] == 1);
  }
}

TEST_CASE("smote labels synthetics with the minority class even when it is zero") {
  Matrix x;
  std::vector<std::uint8_t> y;
  make_blobs(x, y, 3, 9, 4.0, 0.2, 3);  // zeros are the minority here
  const SmoteResult r = smote(x, y, {2, 3, 1.0, 1});
  REQUIRE(r.x.rows == 18);
  for (std::size_t i = 12; i < 18; ++i) CHECK(r.y[i] == 0);
}

TEST_CASE("smote clamps k to the minority size minus one and reports it") {
  Matrix x;
  std::vector<std::uint8_t> y;
  make_blobs(x, y, 9, 3, 4.0, 0.2, 4);
  const SmoteResult r = smote(x, y, {5, 3, 1.0, 1});
  CHECK(r.smote_k_used == 2);
  CHECK(r.k_clamped);
  const SmoteResult ok = smote(x, y, {2, 3, 1.0, 1});
  CHECK(ok.smote_k_used == 2);
  CHECK_FALSE(ok.k_clamped);
}

TEST_CASE("target ratio controls the synthetic count") {
  Matrix x;
  std::vector<std::uint8_t> y;
  make_blobs(x, y, 10, 3, 4.0, 0.2, 5);
  const SmoteResult half = smote(x, y, {2, 3, 0.5, 1});
  CHECK(half.x.rows == 13 + 2);  // round(0.5*10) - 3
  const SmoteResult over = smote(x, y, {2, 3, 2.0, 1});
  CHECK(over.x.rows == 13 + 17);  // round(2*10) - 3
  const SmoteResult tiny = smote(x, y, {2, 3, 0.1, 1});
  CHECK(tiny.x.rows == 13);  // never removes originals
}

TEST_CASE("smote needs two minority rows") {
  Matrix x;
  std::vector<std::uint8_t> y;
  make_blobs(x, y, 9, 1, 4.0, 0.2, 6);
  try {
    smote(x, y, {5, 3, 1.0, 0});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Err::MinorityTooSmall);
  }
}

TEST_CASE("resampling configuration is validated") {
  Matrix x;
  std::vector<std::uint8_t> y;
  make_blobs(x, y, 6, 6, 4.0, 0.2, 7);
  CHECK_THROWS_AS(smote(x, y, {0, 3, 1.0, 0}), Error);
  CHECK_THROWS_AS(enn(x, y, {5, 4, 1.0, 0}), Error);   // even k can tie
  CHECK_THROWS_AS(enn(x, y, {5, -1, 1.0, 0}), Error);
  CHECK_THROWS_AS(smote(x, y, {5, 3, 0.0, 0}), Error);
  CHECK_THROWS_AS(enn(x, y, {5, 13, 1.0, 0}), Error);  // k >= sample count
  std::vector<std::uint8_t> bad(5, 0);
  CHECK_THROWS_AS(smote(x, bad, {5, 3, 1.0, 0}), Error);
}

TEST_CASE("enn keeps everything when the classes are well separated") {
  Matrix x;
  std::vector<std::uint8_t> y;
  make_blobs(x, y, 10, 5, 10.0, 0.1, 8);
  const EnnResult r = enn(x, y, {5, 3, 1.0, 0});
  CHECK(r.x.rows == 15);
  CHECK(std::count(r.removed.begin(), r.removed.end(), 1) == 0);
}

TEST_CASE("enn removes a majority point planted inside the minority cluster") {
  Matrix x(16, 2);
  std::vector<std::uint8_t> y(16, 0);
  Rng rng(9);
  for (int i = 0; i < 10; ++i) {  // majority far away
    x(i, 0) = -10.0 + 0.1 * rng.normal();
    x(i, 1) = -10.0 + 0.1 * rng.normal();
  }
  for (int i = 10; i < 15; ++i) {  // minority cluster
    y[static_cast<std::size_t>(i)] = 1;
    x(i, 0) = 10.0 + 0.1 * rng.normal();
    x(i, 1) = 10.0 + 0.1 * rng.normal();
  }
  x(15, 0) = 10.0;  // the intruder keeps its majority label
  x(15, 1) = 10.0;
  const EnnResult r = enn(x, y, {5, 3, 1.0, 0});
  CHECK(r.removed[15] == 1);
  for (std::size_t i = 0; i < 15; ++i) CHECK(r.removed[i] == 0);
  CHECK(r.x.rows == 15);
}

TEST_CASE("enn with k = n-1 wipes out a small minority") {
  Matrix x;
  std::vector<std::uint8_t> y;
  make_blobs(x, y, 90, 10, 1.0, 2.0, 10);  // heavy overlap
  const EnnResult r = enn(x, y, {5, 99, 1.0, 0});
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(r.removed[i] == (y[i] == 1 ? 1 : 0));
  }
  CHECK(r.x.rows == 90);
}

TEST_CASE("smote_enn is deterministic for a fixed seed and differs across seeds") {
  Matrix x;
  std::vector<std::uint8_t> y;
  make_blobs(x, y, 60, 8, 1.0, 1.0, 11);
  const ResampleConfig cfg{3, 3, 1.0, 42};
  const ResampleResult a = smote_enn(x, y, cfg);
  const ResampleResult b = smote_enn(x, y, cfg);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(a.provenance == b.provenance);
  CHECK(a.removed_by_enn == b.removed_by_enn);

  const ResampleResult c = smote_enn(x, y, {3, 3, 1.0, 43});
  CHECK(a.x.a != c.x.a);
}

TEST_CASE("smote_enn raises the minority share on overlapping gaussians") {
  Matrix x;
  std::vector<std::uint8_t> y;
  make_blobs(x, y, 95, 5, 0.25, 1.0, 12);
  const double before = minority_share(y);
  const ResampleResult r = smote_enn(x, y, {3, 3, 1.0, 1});
  CHECK(minority_share(r.y) > before);
  CHECK(r.x.rows == static_cast<std::int64_t>(r.y.size()));
}

TEST_CASE("smote_enn bookkeeping ties pre-enn rows to survivors") {
  Matrix x;
  std::vector<std::uint8_t> y;
  make_blobs(x, y, 20, 6, 1.5, 1.0, 13);
  const ResampleResult r = smote_enn(x, y, {3, 3, 1.0, 3});
  const auto pre = static_cast<std::int64_t>(r.provenance.size());
  CHECK(pre == 20 + 6 + 14);
  const auto removed = std::count(r.removed_by_enn.begin(), r.removed_by_enn.end(), 1);
  CHECK(r.x.rows == pre - removed);
  // Surviving originals keep their exact coordinates.
  std::int64_t out_row = 0;
  for (std::int64_t i = 0; i < pre; ++i) {
    if (r.removed_by_enn[static_cast<std::size_t>(i)]) continue;
    if (r.provenance[static_cast<std::size_t>(i)] == Provenance::Original) {
      const std::int64_t src = r.origin[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < 2; ++j) CHECK(r.x(out_row, j) == x(src, j));
    }
    ++out_row;
  }
}

TEST_CASE("audit csv lists provenance per pre-enn row") {
  Matrix x;
  std::vector<std::uint8_t> y;
  make_blobs(x, y, 12, 4, 1.0, 1.2, 14);
  const ResampleResult r = smote_enn(x, y, {3, 3, 1.0, 5});
  const std::string path = "/tmp/crashwatch_resample_audit.csv";
  save_resample_audit_csv(r, path);

  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  CHECK(line == "row,provenance,origin,label");
  std::int64_t originals = 0, synthetics = 0, removed = 0, row = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string idx, prov, origin, label;
    std::getline(fields, idx, ',');
    std::getline(fields, prov, ',');
    std::getline(fields, origin, ',');
    std::getline(fields, label, ',');
    CHECK(std::stoll(idx) == row);
    if (prov == "original") ++originals;
    else if (prov == "synthetic") ++synthetics;
    else if (prov == "removed") ++removed;
    else CHECK(false);
    CHECK(label.empty() == (prov == "removed"));
    ++row;
  }
  CHECK(row == static_cast<std::int64_t>(r.provenance.size()));
  CHECK(removed == std::count(r.removed_by_enn.begin(), r.removed_by_enn.end(), 1));
  CHECK(originals + synthetics + removed == row);
}
