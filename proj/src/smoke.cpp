#include "pfan/smoke.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pfan/error.hpp"

namespace pfan {
namespace {

constexpr int kOctaves = 4;
constexpr double kLacunarity = 2.0;
constexpr double kPersistence = 0.5;
constexpr double kCellsAcross = 4.0;         // lattice cells over the short side at octave 0
constexpr double kInitialRadius = 0.15;      // fraction of the short side
constexpr double kSigmasPerRadius = 3.0;     // plume radius = 3 sigma
constexpr double kRisePerFrame = 0.01;       // plume rise, fraction of height per frame at S_t = 1
constexpr double kNoiseDriftPerFrame = 0.02; // texture advection, fraction of height per frame at S_t = 1

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::uint64_t seed, int octave, std::int64_t ix, std::int64_t iy) {
  std::uint64_t h = splitmix64(seed ^ (std::uint64_t(octave) * 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ std::uint64_t(ix));
  h = splitmix64(h ^ (std::uint64_t(iy) * 0x85ebca6bULL));
  return double(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, int octave, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = std::int64_t(fx), iy = std::int64_t(fy);
  const double tx = smooth(x - fx), ty = smooth(y - fy);
  const double a = lattice(seed, octave, ix, iy);
  const double b = lattice(seed, octave, ix + 1, iy);
  const double c = lattice(seed, octave, ix, iy + 1);
  const double d = lattice(seed, octave, ix + 1, iy + 1);
  return (a + (b - a) * tx) + ((c + (d - c) * tx) - (a + (b - a) * tx)) * ty;
}

// Normalized to [0,1].
double fractal_noise(std::uint64_t seed, double x, double y) {
  double total = 0.0, norm = 0.0, amp = 1.0, freq = 1.0;
  for (int o = 0; o < kOctaves; ++o) {
    total += amp * value_noise(seed, o, x * freq, y * freq);
    norm += amp;
    amp *= kPersistence;
    freq *= kLacunarity;
  }
  return total / norm;
}

void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw ValueError(std::string("smoke params: ") + name + " must lie in [0,1]");
}

}  // namespace

void SmokeParams::validate() const {
  check_unit(density, "density");
  check_unit(intensity, "intensity");
  check_unit(temperature, "temperature");
  check_unit(source[0], "source.x");
  check_unit(source[1], "source.y");
  check_unit(light[0], "light.x");
  check_unit(light[1], "light.y");
  check_unit(light_intensity, "light_intensity");
  if (frame < 0) throw ValueError("smoke params: frame must be >= 0");
}

double plume_radius(const SmokeParams& p, Index height, Index width) {
  const double short_side = double(std::min(height, width));
  const double growth = 0.04 + 0.08 * p.temperature;  // per frame
  return kInitialRadius * short_side * (1.0 + growth * double(p.frame));
}

std::array<double, 2> plume_center(const SmokeParams& p, Index height, Index width) {
  const double rise = kRisePerFrame * p.temperature * double(p.frame) * double(height);
  return {p.source[0] * double(width), p.source[1] * double(height) - rise};
}

SmokeLayer render_smoke_frame(const SmokeParams& p, Index height, Index width) {
  if (height < 8 || width < 8) throw ShapeError("render_smoke_frame: extents must be at least 8x8");
  p.validate();
  SmokeLayer layer = SmokeLayer::Zero(height, width);
  const double amplitude = p.density * p.intensity;
  if (amplitude == 0.0) return layer;

  const double short_side = double(std::min(height, width));
  const double cell = short_side / kCellsAcross;
  const double sigma = plume_radius(p, height, width) / kSigmasPerRadius;
  const auto [cx, cy] = plume_center(p, height, width);
  const double drift = kNoiseDriftPerFrame * p.temperature * double(p.frame) * double(height);
  const double lx = p.light[0] * double(width), ly = p.light[1] * double(height);
  const double light_sigma = 0.3 * short_side;

  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const double px = double(x) + 0.5, py = double(y) + 0.5;
      const double d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
      const double mask = std::exp(-d2 / (2.0 * sigma * sigma));
      const double texture = 0.35 + 0.65 * fractal_noise(p.seed, px / cell, (py + drift) / cell);
      const double l2 = (px - lx) * (px - lx) + (py - ly) * (py - ly);
      const double light = 1.0 + 0.5 * p.light_intensity * std::exp(-l2 / (2.0 * light_sigma * light_sigma));
      layer(y, x) = float(std::clamp(amplitude * mask * texture * light, 0.0, 1.0));
    }
  }
  return layer;
}

Image composite(const Image& clean, const SmokeLayer& smoke, bool clamp_output) {
  if (clean.height() != smoke.rows() || clean.width() != smoke.cols()) {
    throw ShapeError("composite: smoke layer extent does not match the image");
  }
  Image out(clean.height(), clean.width());
  for (int c = 0; c < 3; ++c) {
    out.channel(c) = clean.channel(c) + smoke;
    if (clamp_output) out.channel(c) = out.channel(c).max(0.0f).min(1.0f);
  }
  return out;
}

}  // namespace pfan
