#pragma once

#include <cstddef>
#include <functional>

namespace gmf {

// Worker count used by parallel_for. 1 disables threading; 0 means
// hardware concurrency.
void set_num_threads(int n);
int num_threads();

// Splits [0, n) into contiguous ranges, one per worker. Each index is
// processed by exactly one worker, so any kernel whose outputs are written
// at most once per index is bitwise independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace gmf
