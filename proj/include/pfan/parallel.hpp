#pragma once

#include <cstddef>
#include <functional>

#include "pfan/tensor.hpp"

namespace pfan {

/// Worker cap from PFAN_THREADS (positive integer); otherwise the hardware
/// concurrency, at least 1. A malformed value is a ConfigError.
std::size_t worker_threads();

/// Runs body(i) for i in [0, n) on up to worker_threads() threads. Each index
/// runs exactly once; the first exception thrown by any body is rethrown after
/// all workers stop.
void parallel_for(Index n, const std::function<void(Index)>& body);

}  // namespace pfan
