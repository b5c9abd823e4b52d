#pragma once

#include <functional>

namespace stomax {

/**
 * @brief Run `work(block)` for block = 0..n_blocks-1 on up to n_threads
 * workers.
 *
 * Blocks are claimed from a shared counter, so the assignment of blocks to
 * threads is nondeterministic; callers must write results into slots indexed
 * by block and reduce them in block order afterwards. With n_threads <= 1 the
 * loop runs on the calling thread. The first exception thrown by any worker
 * is rethrown after all workers have stopped.
 */
void run_blocks(int n_blocks, int n_threads,
                const std::function<void(int)>& work);

}  // namespace stomax
