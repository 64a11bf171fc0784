#pragma once

#include <cstddef>
#include <functional>

namespace spsnerf {

// Worker count from SPSNERF_THREADS; 0 means single-threaded, unset means
// hardware concurrency. Read on every call so tests can flip the variable.
int worker_count();

// Splits [0, n) into one contiguous chunk per worker and runs fn(begin, end,
// worker) on each. Chunk boundaries depend only on n and the worker count, so
// per-worker accumulation buffers can be reduced in a fixed order afterwards.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t, int)>& fn);

}  // namespace spsnerf
