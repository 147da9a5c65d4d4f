#pragma once

#include <cstddef>
#include <functional>

namespace wmlock {

// Runs fn(worker, index) for every index in [0, count) on up to `workers`
// threads. Each worker index in [0, workers) is used by one thread only.
// fn must not throw; capture failures in the result slot instead.
void parallel_for(std::size_t count, int workers,
                  const std::function<void(int worker, std::size_t index)>& fn);

}  // namespace wmlock
