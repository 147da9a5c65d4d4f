#include "wmlock/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace wmlock {

void parallel_for(std::size_t count, int workers,
                  const std::function<void(int, std::size_t)>& fn) {
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(count)));
  if (n <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(0, i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> threads;
  threads.reserve(static_cast<std::size_t>(n));
  for (int w = 0; w < n; ++w) {
    threads.emplace_back([&, w] {
      for (std::size_t i = next++; i < count; i = next++) fn(w, i);
    });
  }
}

}  // namespace wmlock
