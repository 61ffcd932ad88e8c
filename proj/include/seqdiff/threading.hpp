#pragma once

#include <cstddef>
#include <functional>

namespace seqdiff {

// Worker count: SEQDIFF_THREADS if set (clamped to [1, 64]), else hardware default.
std::size_t worker_count();

// Runs fn(i) for i in [0, n) on worker_count() threads. Callers must write
// results into index-addressed slots only; any reduction happens afterwards in
// index order, so results are identical for every thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace seqdiff
