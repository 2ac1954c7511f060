#include <chrono>
#include <cstdio>
#include <functional>
#include <thread>

#include <CLI11.hpp>

#include "crashwatch/core.hpp"
#include "crashwatch/kernels.hpp"
#include "crashwatch/parallel.hpp"

using namespace crashwatch;

namespace {

double best_ms(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

Matrix random_matrix(std::int64_t rows, std::int64_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.a) v = rng.normal();
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  int size = 256;
  int points = 1500;
  int dim = 24;
  int k = 5;
  int reps = 3;
  int jobs = 0;

  CLI::App app{"compare the parallel kernels against their serial references"};
  app.add_option("--size", size, "square matmul dimension");
  app.add_option("--points", points, "rows for the knn benchmark");
  app.add_option("--dim", dim, "columns for the knn benchmark");
  app.add_option("--k", k, "neighbours per query");
  app.add_option("--reps", reps, "repetitions, best time wins");
  app.add_option("--jobs", jobs, "worker threads (default: hardware)");
  CLI11_PARSE(app, argc, argv);

  if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  std::printf("openmp=%s jobs=%d\n", par::openmp_enabled() ? "yes" : "no", jobs);
  std::printf("%-10s %12s %12s %9s %10s\n", "kernel", "serial ms", "parallel ms", "speedup", "identical");

  bool all_identical = true;
  Rng rng(7);

  {
    const Matrix a = random_matrix(size, size, rng);
    const Matrix b = random_matrix(size, size, rng);
    Matrix cs, cp;
    par::set_max_jobs(1);
    const double ts = best_ms(reps, [&] { cs = matmul_serial(a, Trans::N, b, Trans::N); });
    par::set_max_jobs(jobs);
    const double tp = best_ms(reps, [&] { cp = matmul(a, Trans::N, b, Trans::N); });
    const bool same = cs == cp;
    all_identical &= same;
    std::printf("%-10s %12.2f %12.2f %8.2fx %10s\n", "matmul", ts, tp, ts / tp, same ? "yes" : "NO");
  }

  {
    const Matrix x = random_matrix(points, dim, rng);
    std::vector<std::int64_t> all(static_cast<std::size_t>(points));
    for (std::int64_t i = 0; i < points; ++i) all[static_cast<std::size_t>(i)] = i;
    std::vector<std::vector<std::int64_t>> rs, rp;
    par::set_max_jobs(1);
    const double ts = best_ms(reps, [&] { rs = knn_indices_serial(x, all, all, k, true); });
    par::set_max_jobs(jobs);
    const double tp = best_ms(reps, [&] { rp = knn_indices(x, all, all, k, true); });
    const bool same = rs == rp;
    all_identical &= same;
    std::printf("%-10s %12.2f %12.2f %8.2fx %10s\n", "knn", ts, tp, ts / tp, same ? "yes" : "NO");
  }

  if (!all_identical) {
    std::printf("FAIL: parallel output diverged from the serial reference\n");
    return 1;
  }
  return 0;
}
