#include "pfan/metrics.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/LU>

#include "pfan/error.hpp"

namespace pfan {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// D65 reference white.
constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;

const Eigen::Matrix3d& rgb_to_xyz() {
  static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.4124564, 0.3575761, 0.1804375,  //
                                    0.2126729, 0.7151522, 0.0721750,                        //
                                    0.0193339, 0.1191920, 0.9503041)
                                       .finished();
  return m;
}

double decode_gamma(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }
double encode_gamma(double c) { return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055; }

constexpr double kDelta = 6.0 / 29.0;
double lab_f(double t) { return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0; }
double lab_f_inv(double t) { return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0); }

double deg(double rad) { return rad * 180.0 / std::numbers::pi; }
double rad(double deg) { return deg * std::numbers::pi / 180.0; }

void require_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_extent(b)) throw ShapeError(std::string(what) + ": image extents differ");
}

Eigen::ArrayXd gaussian_1d() {
  Eigen::ArrayXd g(kWindow);
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
  }
  return g / g.sum();
}

// Valid-mode separable filtering.
Eigen::ArrayXXd filter_valid(const Eigen::ArrayXXd& x, const Eigen::ArrayXd& g) {
  const Index h = x.rows(), w = x.cols();
  Eigen::ArrayXXd rows = Eigen::ArrayXXd::Zero(h, w - kWindow + 1);
  for (int k = 0; k < kWindow; ++k) rows += g[k] * x.middleCols(k, w - kWindow + 1);
  Eigen::ArrayXXd out = Eigen::ArrayXXd::Zero(h - kWindow + 1, w - kWindow + 1);
  for (int k = 0; k < kWindow; ++k) out += g[k] * rows.middleRows(k, h - kWindow + 1);
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b, double max_val) {
  require_same(a, b, "psnr");
  if (!(max_val > 0.0)) throw ValueError("psnr: max_val must be positive");
  double se = 0.0;
  for (int c = 0; c < 3; ++c) se += (a.channel(c).cast<double>() - b.channel(c).cast<double>()).square().sum();
  const double mse = se / double(3 * a.height() * a.width());
  if (mse == 0.0) return kPsnrInf;
  return 10.0 * std::log10(max_val * max_val / mse);
}

double psnr_u8(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("psnr_u8: buffers must be non-empty and equally sized");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) / 255.0 - double(b[i]) / 255.0;
    se += d * d;
  }
  const double mse = se / double(a.size());
  if (mse == 0.0) return kPsnrInf;
  return 10.0 * std::log10(1.0 / mse);
}

Eigen::ArrayXXd ssim_window() {
  const Eigen::ArrayXd g = gaussian_1d();
  return (g.matrix() * g.matrix().transpose()).array();
}

double ssim_plane(const Eigen::ArrayXXd& x, const Eigen::ArrayXXd& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw ShapeError("ssim: plane extents differ");
  if (x.rows() < kWindow || x.cols() < kWindow) throw ShapeError("ssim: image smaller than the 11x11 window");
  const Eigen::ArrayXd g = gaussian_1d();
  const Eigen::ArrayXXd mx = filter_valid(x, g), my = filter_valid(y, g);
  const Eigen::ArrayXXd exx = filter_valid(x * x, g), eyy = filter_valid(y * y, g), exy = filter_valid(x * y, g);
  const Eigen::ArrayXXd sxx = exx - mx * mx, syy = eyy - my * my, sxy = exy - mx * my;
  const Eigen::ArrayXXd num = (2.0 * mx * my + kC1) * (2.0 * sxy + kC2);
  const Eigen::ArrayXXd den = (mx * mx + my * my + kC1) * (sxx + syy + kC2);
  return (num / den).mean();
}

double ssim(const Image& a, const Image& b) {
  require_same(a, b, "ssim");
  double total = 0.0;
  for (int c = 0; c < 3; ++c) total += ssim_plane(a.channel(c).cast<double>(), b.channel(c).cast<double>());
  return total / 3.0;
}

LabColor srgb_to_lab(const std::array<double, 3>& rgb) {
  const Eigen::Vector3d lin(decode_gamma(rgb[0]), decode_gamma(rgb[1]), decode_gamma(rgb[2]));
  const Eigen::Vector3d xyz = rgb_to_xyz() * lin;
  const double fx = lab_f(xyz[0] / kXn), fy = lab_f(xyz[1] / kYn), fz = lab_f(xyz[2] / kZn);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::array<double, 3> lab_to_srgb(const LabColor& lab) {
  const double fy = (lab.L + 16.0) / 116.0;
  const double fx = fy + lab.a / 500.0, fz = fy - lab.b / 200.0;
  const Eigen::Vector3d xyz(kXn * lab_f_inv(fx), kYn * lab_f_inv(fy), kZn * lab_f_inv(fz));
  const Eigen::Vector3d lin = rgb_to_xyz().inverse() * xyz;
  return {encode_gamma(lin[0]), encode_gamma(lin[1]), encode_gamma(lin[2])};
}

double ciede2000(const LabColor& x, const LabColor& y) {
  const double c1 = std::hypot(x.a, x.b), c2 = std::hypot(y.a, y.b);
  const double c_bar = 0.5 * (c1 + c2);
  const double c_bar7 = std::pow(c_bar, 7.0);
  const double g = 0.5 * (1.0 - std::sqrt(c_bar7 / (c_bar7 + std::pow(25.0, 7.0))));
  const double a1 = (1.0 + g) * x.a, a2 = (1.0 + g) * y.a;
  const double cp1 = std::hypot(a1, x.b), cp2 = std::hypot(a2, y.b);
  auto hue = [](double b, double a) {
    if (a == 0.0 && b == 0.0) return 0.0;
    const double h = deg(std::atan2(b, a));
    return h < 0.0 ? h + 360.0 : h;
  };
  const double hp1 = hue(x.b, a1), hp2 = hue(y.b, a2);

  const double dl = y.L - x.L;
  const double dc = cp2 - cp1;
  double dh = 0.0;
  if (cp1 * cp2 != 0.0) {
    dh = hp2 - hp1;
    if (dh > 180.0) dh -= 360.0;
    else if (dh < -180.0) dh += 360.0;
  }
  const double d_big_h = 2.0 * std::sqrt(cp1 * cp2) * std::sin(rad(dh / 2.0));

  const double l_bar = 0.5 * (x.L + y.L);
  const double cp_bar = 0.5 * (cp1 + cp2);
  double hp_bar = hp1 + hp2;
  if (cp1 * cp2 != 0.0) {
    if (std::abs(hp1 - hp2) <= 180.0) hp_bar = 0.5 * (hp1 + hp2);
    else if (hp1 + hp2 < 360.0) hp_bar = 0.5 * (hp1 + hp2 + 360.0);
    else hp_bar = 0.5 * (hp1 + hp2 - 360.0);
  }
  const double t = 1.0 - 0.17 * std::cos(rad(hp_bar - 30.0)) + 0.24 * std::cos(rad(2.0 * hp_bar)) +
                   0.32 * std::cos(rad(3.0 * hp_bar + 6.0)) - 0.20 * std::cos(rad(4.0 * hp_bar - 63.0));
  const double d_theta = 30.0 * std::exp(-std::pow((hp_bar - 275.0) / 25.0, 2.0));
  const double cp_bar7 = std::pow(cp_bar, 7.0);
  const double rc = 2.0 * std::sqrt(cp_bar7 / (cp_bar7 + std::pow(25.0, 7.0)));
  const double l50 = (l_bar - 50.0) * (l_bar - 50.0);
  const double sl = 1.0 + 0.015 * l50 / std::sqrt(20.0 + l50);
  const double sc = 1.0 + 0.045 * cp_bar;
  const double sh = 1.0 + 0.015 * cp_bar * t;
  const double rt = -std::sin(rad(2.0 * d_theta)) * rc;

  const double tl = dl / sl, tc = dc / sc, th = d_big_h / sh;
  return std::sqrt(tl * tl + tc * tc + th * th + rt * tc * th);
}

double image_ciede2000(const Image& a, const Image& b) {
  require_same(a, b, "image_ciede2000");
  double total = 0.0;
  for (Index y = 0; y < a.height(); ++y)
    for (Index x = 0; x < a.width(); ++x) {
      const LabColor la = srgb_to_lab({a(0, y, x), a(1, y, x), a(2, y, x)});
      const LabColor lb = srgb_to_lab({b(0, y, x), b(1, y, x), b(2, y, x)});
      total += ciede2000(la, lb);
    }
  return total / double(a.height() * a.width());
}

}  // namespace pfan
