#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pfan/arch.hpp"

namespace pfan {

/// Full attention is refused above this many tokens (H·W); its cost grows
/// with the square of the token count.
inline constexpr Index kFullAttentionTokenCap = 128 * 128;

struct BenchRecord {
  AttentionKind kind = AttentionKind::sea;
  Index height = 0, width = 0, channels = 0;
  Index reps = 0;
  double median_ms = 0.0, min_ms = 0.0, max_ms = 0.0;
  std::int64_t analytic_flops = 0;
  std::int64_t measured_multiplies = 0;

  /// One-line JSON object.
  std::string to_json() const;
};

/// Both kernels on the same random q/k/v (C/2 query-key and value channels)
/// at every size. Wall times are the median of `reps` (≥5) untimed-counter
/// runs; the multiply count comes from one extra instrumented run.
std::vector<BenchRecord> run_attention_bench(const std::vector<std::pair<Index, Index>>& sizes, Index channels,
                                             Index reps = 5, std::uint64_t seed = 0);

std::string bench_table(const std::vector<BenchRecord>& records);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct ScalingSummary {
  std::vector<Index> sides;
  std::vector<double> full_flops, sea_flops, ratio;  // ratio = sea/full
  double full_slope = 0.0, sea_slope = 0.0;
  bool ratio_strictly_decreasing = false;
};

/// Analytic counts on square N×N maps.
ScalingSummary attention_scaling(const std::vector<Index>& sides, Index channels);

}  // namespace pfan
