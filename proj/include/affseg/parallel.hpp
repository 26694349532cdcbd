#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace affseg {

// Runs fn(block) for block in [0, blocks) on up to `threads` workers. Callers
// choose the block partition independently of the thread count and write to
// disjoint outputs, so results never depend on `threads`.
template <class Fn>
void parallel_blocks(std::size_t blocks, unsigned threads, Fn&& fn)
{
    threads = std::max(1u, threads);
    if (threads == 1 || blocks <= 1) {
        for (std::size_t b = 0; b < blocks; ++b)
            fn(b);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    auto worker = [&] {
        for (std::size_t b = next++; b < blocks; b = next++) {
            if (failed)
                return;
            try {
                fn(b);
            } catch (...) {
                if (!failed.exchange(true))
                    error = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    const auto n = std::min<std::size_t>(threads, blocks);
    pool.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        pool.emplace_back(worker);
    for (auto& t : pool)
        t.join();
    if (error)
        std::rethrow_exception(error);
}

}  // namespace affseg
