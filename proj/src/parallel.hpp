#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace swiftprune::detail {

/// Runs body(r) for every r in [0, rows) on up to `workers` threads. Each
/// row is written by exactly one worker, so outputs indexed by row need no
/// synchronization. If rows throw, the exception of the lowest row index is
/// rethrown, independent of scheduling.
template <typename Body>
void for_each_row(std::size_t rows, std::size_t workers, Body&& body) {
  workers = std::max<std::size_t>(1, std::min(workers, rows));
  if (workers == 1) {
    for (std::size_t r = 0; r < rows; ++r) body(r);
    return;
  }

  std::vector<std::exception_ptr> errors(rows);
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t r = next.fetch_add(1); r < rows; r = next.fetch_add(1)) {
      try {
        body(r);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };

  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(run);
  run();
  pool.clear();

  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace swiftprune::detail
