#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace aeflow {

/// Worker count used when a call site passes 0.
int default_workers();
void set_default_workers(int workers);
int hardware_workers();

/// Runs body(begin, end) over a static contiguous partition of [0, n). The partition
/// depends only on (n, workers); bodies must write to disjoint outputs, which keeps
/// every result independent of the worker count.
template <class Body>
void parallel_for(std::size_t n, int workers, Body&& body) {
  if (workers <= 0) workers = default_workers();
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), std::max<std::size_t>(n, 1));
  if (w <= 1) {
    body(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(w);
  std::exception_ptr error;
  std::mutex error_mutex;
  for (std::size_t t = 0; t < w; ++t) {
    const std::size_t begin = n * t / w;
    const std::size_t end = n * (t + 1) / w;
    threads.emplace_back([&, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace aeflow
