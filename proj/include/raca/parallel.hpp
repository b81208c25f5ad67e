#pragma once

#include <cstddef>
#include <functional>

namespace raca {

/// Worker cap for internal parallel loops. Defaults to the hardware concurrency.
std::size_t thread_count();
void set_thread_count(std::size_t threads);

/// Runs fn(i) for i in [0, count) on up to thread_count() workers.
/// Each index runs exactly once; callers write results into per-index slots
/// so reductions stay in a fixed order regardless of the worker count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace raca
