#include "stomax/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace stomax {

void run_blocks(int n_blocks, int n_threads,
                const std::function<void(int)>& work) {
    if (n_blocks < 0) {
        throw std::invalid_argument("run_blocks: negative block count");
    }
    if (n_blocks == 0) return;
    if (!work) {
        throw std::invalid_argument("run_blocks: empty work function");
    }

    if (n_threads <= 1) {
        for (int b = 0; b < n_blocks; ++b) {
            work(b);
        }
        return;
    }

    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&]() {
        while (true) {
            const int b = next.fetch_add(1, std::memory_order_relaxed);
            if (b >= n_blocks) return;
            try {
                work(b);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                // Drain remaining blocks so all workers wind down quickly.
                next.store(n_blocks, std::memory_order_relaxed);
                return;
            }
        }
    };

    const int spawned = std::min(n_threads, n_blocks);
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(spawned));
    for (int t = 0; t < spawned; ++t) {
        threads.emplace_back(worker);
    }
    for (auto& th : threads) {
        th.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

}  // namespace stomax
