#pragma once

#include <cstddef>
#include <functional>

namespace snnconv {

/// Resolves a requested worker count; 0 means "all hardware threads".
unsigned resolve_threads(unsigned requested);

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
///
/// Indices are handed out dynamically, so fn must only write state owned by
/// index i; callers reduce per-index results afterwards in index order, which
/// keeps results independent of the thread count. The first exception thrown
/// by any fn is rethrown on the calling thread.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)> &fn);

} // namespace snnconv
