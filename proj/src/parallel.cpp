#include "rwta/parallel.hpp"

#include <cstdlib>
#include <thread>
#include <vector>

namespace rwta {

int worker_count(bool deterministic) {
  if (deterministic) return 1;
  if (const char* env = std::getenv("RWTA_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  if (workers > n) workers = n;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    const int lo = int(std::int64_t(n) * w / workers);
    const int hi = int(std::int64_t(n) * (w + 1) / workers);
    pool.emplace_back([=, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace rwta
