#include "crashwatch/kernels.hpp"

#include <algorithm>
#include <utility>

#include "crashwatch/parallel.hpp"

namespace crashwatch {

namespace {

struct GemmDims {
  std::int64_t m, n, k;
};

GemmDims check_gemm(const Matrix& a, Trans ta, const Matrix& b, Trans tb) {
  const std::int64_t m = ta == Trans::N ? a.rows : a.cols;
  const std::int64_t ka = ta == Trans::N ? a.cols : a.rows;
  const std::int64_t kb = tb == Trans::N ? b.rows : b.cols;
  const std::int64_t n = tb == Trans::N ? b.cols : b.rows;
  if (ka != kb) fail(Err::ShapeMismatch, "matmul inner dimensions disagree");
  return {m, n, ka};
}

// One output row of C; shared by the serial and parallel paths.
void gemm_row(Matrix& c, std::int64_t i, const Matrix& a, Trans ta, const Matrix& b, Trans tb, std::int64_t n,
              std::int64_t k) {
  double* out = c.row(i);
  if (ta == Trans::N && tb == Trans::T) {
    const double* ai = a.row(i);
    for (std::int64_t j = 0; j < n; ++j) {
      const double* bj = b.row(j);
      double s = 0.0;
      for (std::int64_t kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
      out[j] = s;
    }
    return;
  }
  for (std::int64_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double av = ta == Trans::N ? a(i, kk) : a(kk, i);
      const double bv = tb == Trans::N ? b(kk, j) : b(j, kk);
      s += av * bv;
    }
    out[j] = s;
  }
}

}  // namespace

Matrix matmul_serial(const Matrix& a, Trans ta, const Matrix& b, Trans tb) {
  const auto [m, n, k] = check_gemm(a, ta, b, tb);
  Matrix c(m, n);
  for (std::int64_t i = 0; i < m; ++i) gemm_row(c, i, a, ta, b, tb, n, k);
  return c;
}

Matrix matmul(const Matrix& a, Trans ta, const Matrix& b, Trans tb) {
  const auto [m, n, k] = check_gemm(a, ta, b, tb);
  Matrix c(m, n);
  par::for_each_index(m, [&](std::int64_t i) { gemm_row(c, i, a, ta, b, tb, n, k); });
  return c;
}

namespace {

double sq_dist(const Matrix& x, std::int64_t i, std::int64_t j) {
  const double* ri = x.row(i);
  const double* rj = x.row(j);
  double s = 0.0;
  for (std::int64_t c = 0; c < x.cols; ++c) {
    const double d = ri[c] - rj[c];
    s += d * d;
  }
  return s;
}

std::vector<std::int64_t> knn_one(const Matrix& x, const std::vector<std::int64_t>& candidates, std::int64_t q,
                                  int k, bool exclude_self) {
  std::vector<std::pair<double, std::int64_t>> d;
  d.reserve(candidates.size());
  for (const std::int64_t c : candidates) {
    if (exclude_self && c == q) continue;
    d.emplace_back(sq_dist(x, q, c), c);
  }
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(take), d.end());
  std::vector<std::int64_t> out(take);
  for (std::size_t i = 0; i < take; ++i) out[i] = d[i].second;
  return out;
}

}  // namespace

std::vector<std::vector<std::int64_t>> knn_indices_serial(const Matrix& x,
                                                          const std::vector<std::int64_t>& candidates,
                                                          const std::vector<std::int64_t>& queries, int k,
                                                          bool exclude_self) {
  std::vector<std::vector<std::int64_t>> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) out[i] = knn_one(x, candidates, queries[i], k, exclude_self);
  return out;
}

std::vector<std::vector<std::int64_t>> knn_indices(const Matrix& x, const std::vector<std::int64_t>& candidates,
                                                   const std::vector<std::int64_t>& queries, int k,
                                                   bool exclude_self) {
  std::vector<std::vector<std::int64_t>> out(queries.size());
  par::for_each_index(static_cast<std::int64_t>(queries.size()), [&](std::int64_t i) {
    out[static_cast<std::size_t>(i)] = knn_one(x, candidates, queries[static_cast<std::size_t>(i)], k, exclude_self);
  });
  return out;
}

}  // namespace crashwatch
