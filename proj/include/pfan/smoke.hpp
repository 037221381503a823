#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>

#include "pfan/image.hpp"

namespace pfan {

/// Generation knobs of one smoke frame. Locations are normalized image
/// coordinates (x right, y down) in [0,1]².
struct SmokeParams {
  double density = 0.5;      // S_d
  double intensity = 0.8;    // S_i
  double temperature = 0.5;  // S_t, mapped to upward drift speed
  std::array<double, 2> source{0.5, 0.6};  // S_l
  std::array<double, 2> light{0.5, 0.2};   // L_l
  double light_intensity = 0.5;            // L_i
  std::uint64_t seed = 0;
  Index frame = 0;

  void validate() const;
};

/// H×W additive luminance in [0,1].
using SmokeLayer = Eigen::ArrayXXf;

/// Plume radius in pixels at the parameters' frame. Nondecreasing in frame.
double plume_radius(const SmokeParams& p, Index height, Index width);
/// Plume center in pixels (x, y) at the parameters' frame.
std::array<double, 2> plume_center(const SmokeParams& p, Index height, Index width);

/// Procedural smoke frame: 4-octave value noise (lacunarity 2, persistence
/// 0.5) advected upward by temperature·frame, masked by a Gaussian plume at the
/// source whose radius grows with the frame index, scaled by density·intensity
/// and brightened toward the light. Deterministic in (params, height, width).
SmokeLayer render_smoke_frame(const SmokeParams& p, Index height, Index width);

/// clean + smoke on every RGB channel, clamped to [0,1] unless `clamp_output`
/// is false.
Image composite(const Image& clean, const SmokeLayer& smoke, bool clamp_output = true);

}  // namespace pfan
