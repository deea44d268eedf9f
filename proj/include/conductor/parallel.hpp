#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace conductor {

/// Runs body(begin, end) over disjoint chunks of [0, count) on worker threads.
/// Chunks never overlap, so bodies that write only to their own index range
/// need no synchronization.
template <typename Body>
void parallelFor(std::size_t count, Body&& body, std::size_t minChunk = 1024) {
    const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    const std::size_t workers = std::min(hw, std::max<std::size_t>(1, count / std::max<std::size_t>(1, minChunk)));
    if (workers <= 1) {
        body(std::size_t{0}, count);
        return;
    }
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    const std::size_t chunk = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        threads.emplace_back([&body, begin, end] { body(begin, end); });
    }
}

} // namespace conductor
