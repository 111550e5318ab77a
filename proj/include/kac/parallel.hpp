#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace kac {

/// Number of worker threads used for replica loops (0 = hardware default).
inline unsigned& replica_threads() {
    static unsigned n = 0;
    return n;
}

/// Calls fn(i) for i in [0, count) on a small thread pool. Results must be
/// written to per-index slots so that reductions stay order-independent.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    unsigned threads = replica_threads() != 0 ? replica_threads() : std::thread::hardware_concurrency();
    threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), count));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = count;
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    pool.clear();
    if (error) std::rethrow_exception(error);
}

}  // namespace kac
