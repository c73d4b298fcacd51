#ifndef LWAT_THREADING_HPP
#define LWAT_THREADING_HPP

#include <cstdint>
#include <functional>

namespace lwat {

// Global worker count. 1 (the default) runs everything inline.
void set_num_threads(int n);
int num_threads();

// Runs fn(begin, end) over disjoint index ranges. Each output index is
// produced by exactly one range in the same per-index order as the serial
// loop, so the result is bitwise identical for any thread count.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

} // namespace lwat

#endif // LWAT_THREADING_HPP
