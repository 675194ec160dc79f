#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace qsmf {

// Run fn(begin, end) over [0, n) in contiguous chunks. Every output slot is
// written by exactly one chunk, so results are identical for any thread count;
// reductions are left to the caller, which must merge in a fixed order.
template <typename Fn>
void parallel_for(std::int64_t n, int threads, Fn fn) {
    if (threads <= 1 || n < 2048) {
        fn(std::int64_t{0}, n);
        return;
    }
    const int t = threads;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(t));
    const std::int64_t chunk = (n + t - 1) / t;
    for (int w = 0; w < t; ++w) {
        const std::int64_t lo = w * chunk;
        const std::int64_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([=] { fn(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace qsmf
