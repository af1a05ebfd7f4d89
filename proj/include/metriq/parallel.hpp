#pragma once

// Deterministic data-parallel map/reduce.
//
// Work [0, n) is cut into fixed-size chunks that do not depend on the thread
// count. Each chunk is folded sequentially, and chunk results are combined by
// a pairwise tree in chunk order, so the result is bit-identical for any
// number of threads.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace metriq {

struct Execution {
    unsigned threads = 1;

    static Execution hardware() {
        return {std::max(1u, std::thread::hardware_concurrency())};
    }
};

/// Runs `body(chunk_index, begin, end)` for every chunk; chunks are claimed
/// dynamically. The first exception thrown by any chunk is rethrown.
template <class Body>
void parallel_chunks(std::size_t n, std::size_t chunk, const Execution &exec, Body &&body) {
    if (n == 0)
        return;
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t n_chunks = (n + chunk - 1) / chunk;
    const unsigned n_threads =
        static_cast<unsigned>(std::min<std::size_t>(std::max(1u, exec.threads), n_chunks));

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1, std::memory_order_relaxed);
            if (c >= n_chunks)
                return;
            try {
                const std::size_t b = c * chunk;
                body(c, b, std::min(n, b + chunk));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
                next.store(n_chunks, std::memory_order_relaxed);
            }
        }
    };

    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n_threads - 1);
        for (unsigned t = 1; t < n_threads; ++t)
            pool.emplace_back(worker);
        worker();
    }
    if (failure)
        std::rethrow_exception(failure);
}

/// Pairwise tree reduction in index order.
template <class T, class Combine>
T tree_reduce(std::vector<T> parts, Combine &&combine) {
    if (parts.empty())
        return T{};
    while (parts.size() > 1) {
        std::vector<T> next;
        next.reserve((parts.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < parts.size(); i += 2)
            next.push_back(combine(parts[i], parts[i + 1]));
        if (parts.size() % 2 == 1)
            next.push_back(std::move(parts.back()));
        parts = std::move(next);
    }
    return std::move(parts.front());
}

/// Folds each chunk with `fold(acc, begin, end)` starting from `init`, then
/// tree-reduces the chunk results with `combine`.
template <class T, class Fold, class Combine>
T deterministic_reduce(std::size_t n, std::size_t chunk, const Execution &exec, const T &init,
                       Fold &&fold, Combine &&combine) {
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t n_chunks = n == 0 ? 0 : (n + chunk - 1) / chunk;
    std::vector<T> parts(n_chunks, init);
    parallel_chunks(n, chunk, exec, [&](std::size_t c, std::size_t b, std::size_t e) {
        fold(parts[c], b, e);
    });
    if (parts.empty())
        return init;
    return tree_reduce(std::move(parts), combine);
}

} // namespace metriq
