#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace stochar {

/// Runs fn(i) for i in [0, n) on `threads` workers. Work is handed out in
/// fixed-size chunks through an atomic cursor; callers write results by
/// index, so output never depends on scheduling. The first exception thrown
/// by any worker is rethrown on the calling thread.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn, std::size_t chunk = 64) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> cursor{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto worker = [&] {
        try {
            for (;;) {
                const std::size_t begin = cursor.fetch_add(chunk);
                if (begin >= n) break;
                const std::size_t end = std::min(n, begin + chunk);
                for (std::size_t i = begin; i < end; ++i) fn(i);
            }
        } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
            cursor.store(n);
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    pool.clear();
    if (error) std::rethrow_exception(error);
}

/// Splits [0, n) into fixed blocks of `block` indices and runs
/// fn(begin, end, acc) once per block with a fresh accumulator. Block
/// boundaries do not depend on the worker count, so merging the returned
/// accumulators in order gives thread-count-independent results.
template <class Acc, class Fn>
std::vector<Acc> parallel_blocks(std::size_t n, std::size_t threads, std::size_t block, const Acc& init, Fn&& fn) {
    block = std::max<std::size_t>(1, block);
    const std::size_t n_blocks = (n + block - 1) / block;
    std::vector<Acc> out(n_blocks, init);
    parallel_for(
        n_blocks, threads,
        [&](std::size_t k) { fn(k * block, std::min(n, (k + 1) * block), out[k]); }, 1);
    return out;
}

} // namespace stochar
