#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace pcm {

/// Worker count for the data-parallel kernels. Results never depend on it:
/// work is cut into fixed chunks and every reduction combines chunk partials
/// in index order, so the float summation order is pinned.
inline int& thread_count() {
    static int n = std::max(1u, std::min(std::thread::hardware_concurrency(), 8u));
    return n;
}

inline void set_thread_count(int n) { thread_count() = std::max(1, n); }

inline constexpr std::size_t kChunk = 512;

/// Runs fn(i0, i1, chunk_index) over [0, n) in fixed chunks of kChunk.
template <typename Fn>
void parallel_chunks(std::size_t n, Fn&& fn) {
    if (n == 0) return;
    const std::size_t nchunks = (n + kChunk - 1) / kChunk;
    const int workers = std::min<std::size_t>(thread_count(), nchunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < nchunks; ++c)
            fn(c * kChunk, std::min(n, (c + 1) * kChunk), c);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            std::size_t c = next.fetch_add(1);
            if (c >= nchunks) break;
            fn(c * kChunk, std::min(n, (c + 1) * kChunk), c);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
}

/// Deterministic parallel sum of term(i) over [0, n): per-chunk partials in
/// index order, chunks combined in index order.
template <typename Term>
double parallel_sum(std::size_t n, Term&& term) {
    if (n == 0) return 0.0;
    std::vector<double> partial((n + kChunk - 1) / kChunk, 0.0);
    parallel_chunks(n, [&](std::size_t i0, std::size_t i1, std::size_t c) {
        double s = 0.0;
        for (std::size_t i = i0; i < i1; ++i) s += term(i);
        partial[c] = s;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

} // namespace pcm
