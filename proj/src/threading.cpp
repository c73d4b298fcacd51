#include "lwat/threading.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace lwat {

namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int n) { g_threads.store(n < 1 ? 1 : n); }

int num_threads() { return g_threads.load(); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    const int nt = std::min<int64_t>(num_threads(), n);
    if (nt <= 1 || n <= 1) {
        if (n > 0) fn(0, n);
        return;
    }
    const int64_t chunk = (n + nt - 1) / nt;
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (int t = 0; t < nt; ++t) {
        const int64_t b = t * chunk;
        const int64_t e = std::min<int64_t>(b + chunk, n);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    for (auto& th : pool) th.join();
}

} // namespace lwat
