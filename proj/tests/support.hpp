#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pfan/image.hpp"
#include "pfan/nn.hpp"
#include "pfan/ops.hpp"

namespace pfan::test {

template <typename T>
Tensor<T> randn(const Shape& shape, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sd);
  typename Tensor<T>::Array data(shape_numel(shape));
  for (Index i = 0; i < data.size(); ++i) data[i] = T(dist(rng));
  return Tensor<T>(shape, std::move(data));
}

template <typename T>
Tensor<T> randu(const Shape& shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  typename Tensor<T>::Array data(shape_numel(shape));
  for (Index i = 0; i < data.size(); ++i) data[i] = T(dist(rng));
  return Tensor<T>(shape, std::move(data));
}

// Overwrites every parameter with N(0, sd) so gradients are well scaled.
template <typename T>
void randomize(const ParamStore<T>& store, std::uint64_t seed, double sd = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sd);
  for (const auto& [name, t] : store)
    for (Index i = 0; i < t.size(); ++i) t.mutable_data()[i] = T(dist(rng));
}

struct GradCheck {
  double max_rel = 0.0;
  std::string worst;
  Index checked = 0;
};

// Central differences of L = sum(forward() ⊙ R) for a fixed random R, on up to
// `per_tensor` sampled coordinates of each named input. Relative error is
// |a - n| / max(|a|, |n|, floor).
template <typename F>
GradCheck gradcheck(const std::vector<std::pair<std::string, Tensor<double>>>& inputs, F&& forward,
                    std::uint64_t seed, Index per_tensor = 6, double h = 1e-4, double floor = 1e-6) {
  for (const auto& [name, t] : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  const Tensor<double> out = forward();
  const Tensor<double> r = randn<double>(out.shape(), seed ^ 0x5eedULL);
  sum(mul(out, r)).backward();
  auto loss = [&] {
    NoGradGuard no_grad;
    return sum(mul(forward(), r)).item();
  };

  GradCheck result;
  std::mt19937_64 rng(seed);
  for (const auto& [name, t] : inputs) {
    const auto analytic = t.grad();
    std::vector<Index> coords;
    if (t.size() <= per_tensor) {
      for (Index i = 0; i < t.size(); ++i) coords.push_back(i);
    } else {
      std::uniform_int_distribution<Index> pick(0, t.size() - 1);
      for (Index k = 0; k < per_tensor; ++k) coords.push_back(pick(rng));
    }
    for (Index i : coords) {
      const double saved = t.data()[i];
      t.mutable_data()[i] = saved + h;
      const double plus = loss();
      t.mutable_data()[i] = saved - h;
      const double minus = loss();
      t.mutable_data()[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double rel =
          std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      ++result.checked;
      if (rel > result.max_rel) {
        result.max_rel = rel;
        result.worst = name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic[i]) + " numeric " +
                       std::to_string(numeric);
      }
    }
  }
  return result;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<double>>> named_params(const ParamStore<T>& store) {
  std::vector<std::pair<std::string, Tensor<double>>> out;
  for (const auto& [name, t] : store) out.emplace_back(name, t);
  return out;
}

// Naive grouped cross-correlation on [C×H×W] buffers.
inline Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& bias,
                                 Index stride, Index pad, Index groups) {
  const Index cin = x.extent(0), h = x.extent(1), wd = x.extent(2);
  const Index cout = w.extent(0), cpg = w.extent(1), k = w.extent(2);
  const Index oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  const Index opg = cout / groups;
  Tensor<double> y({cout, oh, ow});
  for (Index o = 0; o < cout; ++o)
    for (Index i = 0; i < oh; ++i)
      for (Index j = 0; j < ow; ++j) {
        double s = bias.defined() ? bias.data()[o] : 0.0;
        const Index g = o / opg;
        for (Index c = 0; c < cpg; ++c)
          for (Index a = 0; a < k; ++a)
            for (Index b = 0; b < k; ++b) {
              const Index yy = i * stride + a - pad, xx = j * stride + b - pad;
              if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
              s += w.data()[((o * cpg + c) * k + a) * k + b] * x.data()[((g * cpg + c) * h + yy) * wd + xx];
            }
        y.mutable_data()[(o * oh + i) * ow + j] = s;
      }
  (void)cin;
  return y;
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  return (a.data() - b.data()).abs().maxCoeff();
}

inline double max_rel_diff(const Tensor<double>& a, const Tensor<double>& b) {
  return ((a.data() - b.data()).abs() / (a.data().abs().max(b.data().abs()).max(1e-12))).maxCoeff();
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("pfan_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Smooth colored test scenes: per-channel sinusoids plus an offset.
inline Image procedural_scene(Index height, Index width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(1.0, 4.0), phase(0.0, 1.0), offset(-0.1, 0.1);
  Image img(height, width);
  for (int c = 0; c < 3; ++c) {
    const double a = freq(rng), b = freq(rng), p = phase(rng), o = offset(rng);
    for (Index y = 0; y < height; ++y)
      for (Index x = 0; x < width; ++x) {
        const double u = double(x) / double(width), v = double(y) / double(height);
        const double val = 0.45 + 0.25 * std::sin(2.0 * M_PI * (a * u + p)) * std::cos(2.0 * M_PI * b * v) + o;
        img(c, y, x) = float(std::clamp(val, 0.0, 1.0));
      }
  }
  return quantize8(img);
}

inline void write_scenes(const std::filesystem::path& dir, Index count, Index size, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (Index i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene%03lld.png", static_cast<long long>(i));
    write_png(dir / name, procedural_scene(size, size, seed + std::uint64_t(i)));
  }
}

}  // namespace pfan::test
