#include "crashwatch/parallel.hpp"

namespace crashwatch::par {

namespace {
std::atomic<int> g_max_jobs{1};
}

int max_jobs() { return g_max_jobs.load(std::memory_order_relaxed); }

void set_max_jobs(int n) { g_max_jobs.store(n < 1 ? 1 : n, std::memory_order_relaxed); }

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

}  // namespace crashwatch::par
