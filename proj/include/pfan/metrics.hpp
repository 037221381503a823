#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>

#include "pfan/image.hpp"

namespace pfan {

/// PSNR of identical images. Serialized as kPsnrInfToken.
inline constexpr double kPsnrInf = std::numeric_limits<double>::infinity();
inline constexpr const char* kPsnrInfToken = "inf";

/// 10·log10(max_val²/MSE) over all RGB samples, accumulated in double.
double psnr(const Image& a, const Image& b, double max_val = 1.0);
/// 8-bit samples are scaled to [0,1] and compared with max_val = 1.
double psnr_u8(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1. Averaged over valid window positions, then
/// over the three RGB channels.
double ssim(const Image& a, const Image& b);
double ssim_plane(const Eigen::ArrayXXd& a, const Eigen::ArrayXXd& b);

/// The normalized 11×11 window, outer product of the 1-D Gaussian.
Eigen::ArrayXXd ssim_window();

struct LabColor {
  double L = 0.0, a = 0.0, b = 0.0;
};

/// sRGB (IEC 61966-2-1 transfer) → XYZ (D65) → CIE L*a*b*.
LabColor srgb_to_lab(const std::array<double, 3>& rgb);
std::array<double, 3> lab_to_srgb(const LabColor& lab);

/// ΔE00 with k_L = k_C = k_H = 1.
double ciede2000(const LabColor& x, const LabColor& y);
/// Mean per-pixel ΔE00.
double image_ciede2000(const Image& a, const Image& b);

}  // namespace pfan
