#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "nsatp/oracle.hpp"

namespace nsatp {

/// Number of workers to use when the caller asks for 0.
inline std::size_t default_workers() {
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Calls fn(i, oracle) for every i in [0, n) on up to `workers` threads.
/// Each thread builds its own oracle from `factory`. Work items are
/// independent and write only their own slot, so the results equal a
/// single-threaded run. The exception of the lowest failing index is
/// rethrown after all threads finish.
template <typename Fn>
void parallel_for_each_oracle(std::size_t n, std::size_t workers, const OracleFactory& factory,
                              Fn&& fn) {
  if (n == 0) return;
  workers = std::clamp<std::size_t>(workers == 0 ? default_workers() : workers, 1, n);

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::size_t error_index = n;

  auto worker = [&]() {
    std::unique_ptr<Oracle> oracle;
    try {
      oracle = factory();
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) {
        error = std::current_exception();
        error_index = 0;
      }
      next.store(n);
      return;
    }
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i, *oracle);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error = std::current_exception();
          error_index = i;
        }
        next.store(n);
        return;
      }
    }
  };

  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace nsatp
