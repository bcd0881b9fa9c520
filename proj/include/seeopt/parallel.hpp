#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace seeopt {

// Worker cap: explicit set_max_threads() wins, then SPDE_SMP_THREADS, then
// hardware concurrency. Everything parallelized here writes to disjoint
// per-index slots, so results cannot depend on the cap.
inline std::atomic<int>& max_threads_override() {
    static std::atomic<int> v{0};
    return v;
}

inline void set_max_threads(int n) { max_threads_override().store(n); }

inline int effective_threads() {
    int n = max_threads_override().load();
    if (n <= 0) {
        if (const char* env = std::getenv("SPDE_SMP_THREADS")) n = std::atoi(env);
    }
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, n);
}

// Runs fn(i) for i in [0, n) on up to effective_threads() workers with a
// fixed block split. fn must only touch state owned by index i.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const int workers = std::min<int>(effective_threads(), static_cast<int>(n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace seeopt
