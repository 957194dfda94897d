#pragma once

#include <cstddef>
#include <functional>

namespace symdiff {

/// Global worker cap. 0 selects std::thread::hardware_concurrency().
/// Results of every library routine are independent of this value.
void set_max_threads(unsigned n);
unsigned max_threads();

/// Runs body(i) for i in [0, n) across up to max_threads() workers.
/// Work items must write to disjoint outputs; exceptions are rethrown
/// on the calling thread (the first one by item index).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace symdiff
