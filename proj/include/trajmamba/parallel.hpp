#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace trajmamba {

/// Calls fn(i) for i in [0, count) on up to `workers` threads, each taking a
/// contiguous block. Results must be written by index, which keeps output
/// independent of the worker count. The first exception is rethrown.
template <typename F>
void parallel_for(std::size_t count, std::size_t workers, F&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    const std::size_t per = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w * per; i < std::min(count, (w + 1) * per); ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace trajmamba
