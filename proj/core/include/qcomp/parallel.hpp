#pragma once

#include <cstddef>
#include <functional>

namespace qcomp {

// Process-wide cap on worker threads. 0 restores the default
// (hardware concurrency).
void set_thread_count(unsigned threads);
unsigned thread_count();

// Runs body(i) for i in [0, n) on up to thread_count() workers. Each index is
// visited exactly once; callers write results to slot i and reduce afterwards
// in index order, which keeps results independent of the thread count. The
// first exception (lowest index) is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace qcomp
