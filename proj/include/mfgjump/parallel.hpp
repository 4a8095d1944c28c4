#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace mfgjump {

/// Resolve a requested worker count; 0 means one per hardware thread.
inline unsigned resolve_threads(unsigned requested) noexcept {
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

/**
 * Run fn(i) for i in [0, n) over contiguous chunks. Each index is visited
 * exactly once, so results written to disjoint slots are identical to a
 * serial run.
 */
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    const unsigned t = std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(n / 32, 1));
    if (t <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(t);
    const std::size_t chunk = (n + t - 1) / t;
    for (unsigned w = 0; w < t; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([begin, end, &fn] {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        });
    }
}

}  // namespace mfgjump
