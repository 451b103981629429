#include "meanfield2nn/parallel.hpp"

#include <atomic>

namespace mf {

namespace {
std::atomic<int> g_threads{1};
}

int default_threads() { return g_threads.load(); }

void set_default_threads(int threads) { g_threads.store(std::max(threads, 1)); }

double pairwise_sum(const double* values, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += values[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(values, half) + pairwise_sum(values + half, n - half);
}

} // namespace mf
