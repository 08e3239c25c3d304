#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <limits>
#include <thread>
#include <vector>

namespace panelfactor {

// Worker resolution: an explicit positive request wins; 0 falls back to the
// PANELFACTOR_THREADS environment variable, then to the hardware count.
inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("PANELFACTOR_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Static partition of [0, n) into one contiguous range per worker. Each index
// runs exactly once and must write only to its own output slot, so results do
// not depend on scheduling or worker count. If bodies throw, the exception
// from the smallest index is rethrown.
template <typename Body>
void parallel_for(std::size_t n, int workers, Body&& body) {
  if (n == 0) return;
  std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(resolve_workers(workers)), n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(w);
  std::vector<std::size_t> error_index(w, std::numeric_limits<std::size_t>::max());
  std::vector<std::thread> threads;
  threads.reserve(w - 1);
  std::size_t chunk = n / w, extra = n % w, begin = 0;
  for (std::size_t k = 0; k < w; ++k) {
    std::size_t len = chunk + (k < extra ? 1 : 0);
    std::size_t lo = begin, hi = begin + len;
    begin = hi;
    auto run = [&body, &errors, &error_index, lo, hi, k]() {
      for (std::size_t i = lo; i < hi; ++i) {
        try {
          body(i);
        } catch (...) {
          errors[k] = std::current_exception();
          error_index[k] = i;
          return;
        }
      }
    };
    if (k + 1 == w) {
      run();
    } else {
      threads.emplace_back(run);
    }
  }
  for (auto& t : threads) t.join();
  std::size_t first = std::numeric_limits<std::size_t>::max();
  std::exception_ptr picked;
  for (std::size_t k = 0; k < w; ++k) {
    if (errors[k] && error_index[k] < first) {
      first = error_index[k];
      picked = errors[k];
    }
  }
  if (picked) std::rethrow_exception(picked);
}

}  // namespace panelfactor
