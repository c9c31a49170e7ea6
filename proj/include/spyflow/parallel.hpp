#pragma once

#include <cstddef>
#include <functional>

namespace spyflow {

/// Worker count from SPYFLOW_THREADS (0 or unset = hardware concurrency).
int worker_threads();

/// Calls fn(i) for i in [0, n) across up to worker_threads() threads. Each
/// index must write only to its own output slot; callers reduce afterwards
/// in index order so results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace spyflow
