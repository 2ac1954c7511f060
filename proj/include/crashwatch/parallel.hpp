#pragma once

#include <atomic>
#include <cstdint>
#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace crashwatch::par {

// Worker cap for OpenMP kernels. 1 means serial execution everywhere.
int max_jobs();
void set_max_jobs(int n);
bool openmp_enabled();

// Runs fn(i) for i in [0, n). Every index is computed by exactly one worker
// and writes only to its own output slots, so results are identical for any
// job count. Exceptions are captured and rethrown on the calling thread.
template <class F>
void for_each_index(std::int64_t n, F&& fn) {
  const int jobs = max_jobs();
  if (jobs <= 1 || n <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
#ifdef _OPENMP
  std::atomic<bool> failed{false};
  std::exception_ptr err;
#pragma omp parallel for schedule(static) num_threads(jobs)
  for (std::int64_t i = 0; i < n; ++i) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      fn(i);
    } catch (...) {
#pragma omp critical(crashwatch_par_err)
      {
        if (!failed.exchange(true)) err = std::current_exception();
      }
    }
  }
  if (err) std::rethrow_exception(err);
#else
  for (std::int64_t i = 0; i < n; ++i) fn(i);
#endif
}

}  // namespace crashwatch::par
