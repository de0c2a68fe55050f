#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace cbo {

namespace detail {

inline std::size_t& thread_cap_slot() {
    static std::size_t cap = [] {
        std::size_t n = std::max(1u, std::thread::hardware_concurrency());
        if (const char* env = std::getenv("CBO_THREADS")) {
            char* end = nullptr;
            long parsed = std::strtol(env, &end, 10);
            if (end != env && parsed > 0) n = static_cast<std::size_t>(parsed);
        }
        return n;
    }();
    return cap;
}

} // namespace detail

// Worker cap shared by all parallel loops. Initialized from the machine
// parallelism, or from the CBO_THREADS environment variable when set.
inline std::size_t max_threads() { return detail::thread_cap_slot(); }

inline void set_max_threads(std::size_t n) {
    detail::thread_cap_slot() = std::max<std::size_t>(1, n);
}

// Runs fn(i) for all i in [0, n). Iterations must write disjoint state;
// reductions happen at the call site afterwards, in index order. The result
// is therefore identical for any worker count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t grain = 256) {
    if (n == 0) return;
    const std::size_t workers =
        std::min(max_threads(), (n + grain - 1) / grain);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }

    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::exception_ptr> errors(workers);
    auto run_chunk = [&](std::size_t w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        try {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run_chunk, w);
    run_chunk(0);
    for (auto& t : pool) t.join();

    // Rethrow the error from the lowest chunk so failures are deterministic.
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace cbo
