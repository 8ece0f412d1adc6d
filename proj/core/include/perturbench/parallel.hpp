#pragma once

#include <cstddef>
#include <functional>

namespace perturbench {

/// Worker count: PERTURBENCH_THREADS if set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
int thread_count();

/// Runs fn(0) .. fn(n-1) across thread_count() workers. Callers write results
/// into per-index slots, so output never depends on scheduling. The exception
/// from the lowest failing index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace perturbench
