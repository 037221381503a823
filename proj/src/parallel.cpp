#include "pfan/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "pfan/error.hpp"

namespace pfan {

std::size_t worker_threads() {
  if (const char* env = std::getenv("PFAN_THREADS"); env && *env) {
    try {
      std::size_t used = 0;
      const long v = std::stol(env, &used);
      if (used == std::string(env).size() && v >= 1) return std::size_t(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("PFAN_THREADS: expected a positive integer, got '") + env + "'");
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(Index n, const std::function<void(Index)>& body) {
  if (n <= 0) return;
  const auto workers = std::min<std::size_t>(worker_threads(), std::size_t(n));
  if (workers == 1) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    for (Index i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace pfan
