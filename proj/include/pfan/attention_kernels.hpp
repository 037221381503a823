#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pfan/tensor.hpp"

namespace pfan {

/// Forward-only attention kernels on precomputed projections, written as
/// plain loops so every multiplication can be counted. Layouts are row-major
/// [C×H×W]; q and k have `qk` channels, v has `cv`. The result is the
/// [cv×H×W] map before the output projection.
///
/// When `multiplies` is non-null it is incremented once per executed scalar
/// multiplication or division; the totals equal flop_count() exactly.
std::vector<double> sea_attention_kernel(std::span<const double> q, std::span<const double> k,
                                         std::span<const double> v, Index qk, Index cv, Index height, Index width,
                                         std::int64_t* multiplies = nullptr);

std::vector<double> full_attention_kernel(std::span<const double> q, std::span<const double> k,
                                          std::span<const double> v, Index qk, Index cv, Index height, Index width,
                                          std::int64_t* multiplies = nullptr);

}  // namespace pfan
