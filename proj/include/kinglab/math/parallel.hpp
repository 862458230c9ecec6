#ifndef KINGLAB_MATH_PARALLEL_HPP
#define KINGLAB_MATH_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace kinglab::math {

/// process-wide worker count used by parallel_for / parallel_sum
inline int& worker_count() {
    static int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    return n;
}

/// Runs fn(begin, end) on contiguous index chunks across worker threads.
/// Chunking is a fixed function of (n, workers), so reductions built on
/// top of it are deterministic for a fixed worker count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const int workers = std::max(1, worker_count());
    if (workers == 1 || n < 2048) {
        fn(std::size_t{0}, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) {
        const std::size_t b = std::min(n, t * chunk), e = std::min(n, (t + 1) * chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    for (auto& th : pool) th.join();
}

/// Deterministic parallel sum of term(i) for i in [0, n): per-chunk serial
/// partials combined in chunk order.
template <class Term>
double parallel_sum(std::size_t n, Term&& term) {
    const int workers = std::max(1, worker_count());
    const std::size_t nchunks = (workers == 1 || n < 2048) ? 1 : static_cast<std::size_t>(workers);
    std::vector<double> partial(nchunks, 0.0);
    const std::size_t chunk = (n + nchunks - 1) / nchunks;
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        const std::size_t c = b / chunk;
        double s = 0.0;
        for (std::size_t i = b; i < e; ++i) s += term(i);
        partial[c] = s;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

} // namespace kinglab::math

#endif
