#pragma once

// Minimal deterministic parallelism. Work is cut into fixed-size chunks
// whose boundaries depend only on the problem size and the grain, never on
// the thread count; each chunk is executed by exactly one thread and every
// output element is written by exactly one chunk. Reductions that cross
// chunks are done sequentially by the caller. Results are therefore bitwise
// identical for any --threads value.

#include <atomic>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace texsynth {

namespace detail {
inline std::atomic<int>& thread_count_slot() {
    static std::atomic<int> n{0};  // 0 = auto (hardware concurrency)
    return n;
}
}  // namespace detail

inline void set_num_threads(int n) { detail::thread_count_slot().store(n < 0 ? 0 : n); }

inline int num_threads() {
    int n = detail::thread_count_slot().load();
    if (n <= 0) {
        unsigned hw = std::thread::hardware_concurrency();
        n = hw ? static_cast<int>(hw) : 1;
    }
    return n;
}

// Runs f(i0, i1) over half-open chunk ranges covering [begin, end).
template <class F>
void parallel_for(std::int64_t begin, std::int64_t end, std::int64_t grain, F&& f) {
    if (end <= begin) return;
    if (grain < 1) grain = 1;
    const std::int64_t total = end - begin;
    const std::int64_t n_chunks = (total + grain - 1) / grain;
    const int threads = static_cast<int>(std::min<std::int64_t>(num_threads(), n_chunks));

    if (threads <= 1) {
        for (std::int64_t c = 0; c < n_chunks; ++c) {
            const std::int64_t i0 = begin + c * grain;
            f(i0, std::min(end, i0 + grain));
        }
        return;
    }

    std::atomic<std::int64_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    auto worker = [&] {
        for (;;) {
            const std::int64_t c = next.fetch_add(1);
            if (c >= n_chunks || failed.load()) return;
            const std::int64_t i0 = begin + c * grain;
            try {
                f(i0, std::min(end, i0 + grain));
            } catch (...) {
                if (!failed.exchange(true)) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace texsynth
