#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace translayer {

// Deterministic helpers: results never depend on the worker count because
// every parallel loop writes to preassigned slots and reductions run over
// stored arrays in a fixed pairwise order.

inline double pairwise_sum(const double* x, std::size_t n) {
    if (n <= 32) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& x) {
    return pairwise_sum(x.data(), x.size());
}

// Runs body(i) for i in [begin, end). With workers <= 1 this is a plain loop.
// Each worker owns a contiguous index range; body must only write to
// per-index storage.
inline void parallel_for(long begin, long end, int workers,
                         const std::function<void(long)>& body) {
    const long n = end - begin;
    if (n <= 0) return;
    if (workers <= 1 || n == 1) {
        for (long i = begin; i < end; ++i) body(i);
        return;
    }
    const int used = static_cast<int>(std::min<long>(workers, n));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(used));
    const long chunk = (n + used - 1) / used;
    for (int w = 0; w < used; ++w) {
        const long lo = begin + w * chunk;
        const long hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body]() {
            for (long i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace translayer
