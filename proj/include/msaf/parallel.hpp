#pragma once

#include <cstddef>
#include <functional>

namespace msaf {

/// Number of worker threads used by parallel_for. 0 or 1 runs inline.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs body(i) for i in [0, n). Each index must write only to its own output
/// slot; callers reduce in index order afterwards so results are schedule-free.
/// The first exception thrown by any body is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace msaf
