#include "spsnerf/threads.hpp"

#include <cstdlib>
#include <thread>
#include <vector>

namespace spsnerf {

int worker_count() {
  const char* env = std::getenv("SPSNERF_THREADS");
  if (env) {
    int n = std::atoi(env);
    return n <= 0 ? 1 : n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : int(hw);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t, int)>& fn) {
  if (n == 0) return;
  int workers = worker_count();
  if (std::size_t(workers) > n) workers = int(n);
  if (workers <= 1) {
    fn(0, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::size_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    std::size_t begin = std::size_t(w) * chunk;
    std::size_t end = begin + chunk < n ? begin + chunk : n;
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end, w] { fn(begin, end, w); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace spsnerf
