#pragma once

#include <cstdint>
#include <functional>

namespace ssldetect {

// Number of worker threads used by parallel_for. Defaults to the hardware
// concurrency, capped by the SSLDETECT_THREADS environment variable.
int thread_count();
void set_thread_count(int n);

// Runs fn(i) for i in [0, n). Iterations must be independent: each index
// writes only its own outputs, so the result is bit-identical to the
// sequential loop for any thread count. Reductions that need a fixed
// accumulation order must be done by the caller after this returns.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

// Chunked variant: fn(begin, end) over disjoint ranges covering [0, n).
void parallel_for_chunked(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

} // namespace ssldetect
