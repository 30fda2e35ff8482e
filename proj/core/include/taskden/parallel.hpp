#pragma once

#include <cstddef>
#include <functional>

namespace taskden {

/// Worker-thread cap, read once from TOD_THREADS (default 1).
std::size_t worker_threads();

/// Overrides the TOD_THREADS value for the current process.
void set_worker_threads(std::size_t n);

/// Treats subnormal floats as zero on the calling thread. Training sets
/// this on entry: collapsed activations otherwise run ~10x slower.
void flush_denormals();

/// Runs fn(i) for i in [0, n). Work is split into contiguous blocks so every
/// index is handled by exactly one thread; callers keep results bitwise
/// independent of the thread count by writing per-index outputs only.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace taskden
