#pragma once

#include <cstddef>
#include <functional>

namespace sleb {

// Worker cap: min(hardware threads, SLEB_THREADS), at least one.
size_t worker_count();

// Runs f(0..n-1) across workers. Each index must be independent and write
// only to its own output slot, so the schedule cannot affect results.
void parallel_for(size_t n, const std::function<void(size_t)>& f);

}  // namespace sleb
