#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mf {

/// Process-wide cap on worker threads (the CLI's --threads). 1 by default.
int default_threads();
void set_default_threads(int threads);

/// Runs body(i) for i in [0, n) on up to `threads` workers with static
/// contiguous chunks. Every index is written by exactly one worker, so results
/// stored per index do not depend on the schedule. The first exception thrown
/// by any worker is rethrown after all workers join.
template <class Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = n * w / workers;
            const std::size_t end = n * (w + 1) / workers;
            pool.emplace_back([&, begin, end] {
                try {
                    for (std::size_t i = begin; i < end; ++i) body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    parallel_for(n, default_threads(), std::forward<Body>(body));
}

/// Pairwise (tree) sum with a fixed association order.
double pairwise_sum(const double* values, std::size_t n);

} // namespace mf
