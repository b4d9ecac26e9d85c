#pragma once

#include <cstddef>
#include <functional>

namespace ecglink {

// Hardware concurrency, at least 1.
std::size_t default_threads();

// Runs fn(i) for every i in [0, n) on up to `threads` workers. Callers write
// results into per-index slots, so outcomes never depend on the thread count.
// If any call throws, the exception from the lowest index is rethrown after
// all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace ecglink
