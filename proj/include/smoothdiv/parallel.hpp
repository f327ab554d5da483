#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace smoothdiv {

// Runs fn(i) for i in [0, count) on up to `workers` threads.  Items may run
// in any order; callers must write results into per-index slots so the
// outcome is independent of scheduling.  The first exception wins and is
// rethrown after all threads have stopped.
inline void parallel_for(std::size_t count, int workers,
                         const std::function<void(std::size_t)>& fn) {
    const std::size_t nw = std::min<std::size_t>(workers < 1 ? 1 : workers, count);
    if (nw <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto body = [&] {
        while (!failed.load(std::memory_order_relaxed)) {
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(nw);
    for (std::size_t w = 0; w < nw; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// Pairwise-tree summation.  The reduction order is a pure function of the
// element count, so totals are bit-identical however the inputs were filled
// in, and roundoff grows like log n instead of n.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 32) {
        double s = 0.0;
        for (const double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double pairwise_mean(std::span<const double> v) {
    return v.empty() ? 0.0 : pairwise_sum(v) / static_cast<double>(v.size());
}

}  // namespace smoothdiv
