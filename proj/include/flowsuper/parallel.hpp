#pragma once

#include <cstddef>
#include <functional>

namespace flowsuper {

/// Worker count used by parallel_for. Defaults to the THREADS environment
/// variable when set, else hardware concurrency.
std::size_t thread_count();
void set_thread_count(std::size_t threads);

/// Runs body(i) for i in [0, count). Each index must write only its own
/// output slot; callers reduce in index order afterwards. The first exception
/// thrown by any index is rethrown after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace flowsuper
