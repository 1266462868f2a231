#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

namespace echosonar {

/// Worker count: ECHO_SONAR_THREADS when set to a positive integer, else the
/// number of hardware threads.
inline unsigned worker_count() {
  if (const char* env = std::getenv("ECHO_SONAR_THREADS")) {
    try {
      const long value = std::stol(env);
      if (value > 0) return static_cast<unsigned>(value);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls body(begin, end) on contiguous chunks of [0, n). Chunk boundaries
/// depend only on n and the worker count; each index is visited once.
template <typename Body>
void parallel_for(Eigen::Index n, Body&& body) {
  if (n <= 0) return;
  const auto workers = static_cast<Eigen::Index>(std::min<unsigned>(worker_count(), static_cast<unsigned>(n)));
  if (workers <= 1) {
    body(Eigen::Index{0}, n);
    return;
  }
  const Eigen::Index chunk = (n + workers - 1) / workers;
  std::vector<std::jthread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (Eigen::Index begin = 0; begin < n; begin += chunk) {
    const Eigen::Index end = std::min(n, begin + chunk);
    threads.emplace_back([&body, begin, end] { body(begin, end); });
  }
}

}  // namespace echosonar
