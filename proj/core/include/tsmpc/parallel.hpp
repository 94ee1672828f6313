#pragma once

#include <cstdint>
#include <functional>

namespace tsmpc {

// max(1, std::thread::hardware_concurrency()).
int default_thread_count();

// Runs body(begin, end) over a static block partition of [0, count) on up to
// `threads` worker threads (the calling thread counts as one). Work is split
// identically regardless of thread count, and callers are expected to write to
// disjoint preallocated slots, so results do not depend on scheduling. The
// first exception thrown by any block is rethrown on the calling thread.
void parallel_for_blocks(std::int64_t count, int threads,
                         const std::function<void(std::int64_t, std::int64_t)>& body);

// Per-index convenience wrapper around parallel_for_blocks.
void parallel_for(std::int64_t count, int threads,
                  const std::function<void(std::int64_t)>& body);

}  // namespace tsmpc
