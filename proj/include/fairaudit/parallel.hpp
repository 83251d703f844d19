#pragma once

#include <functional>

namespace fairaudit {

// Runs fn(i) for i in [0, n) on up to `jobs` worker threads. Work items must
// be independent and write only to their own index slot; under that contract
// results are identical for any worker count. jobs <= 1 runs inline.
// The first exception thrown by a worker is rethrown on the calling thread.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace fairaudit
