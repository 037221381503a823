#pragma once

#include <Eigen/Core>

#include <array>
#include <filesystem>

#include "pfan/tensor.hpp"

namespace pfan {

/// H×W×3 sRGB image with planar float storage, values nominally in [0,1].
class Image {
 public:
  using Plane = Eigen::ArrayXXf;  // (row = y, col = x)

  Image() = default;
  Image(Index height, Index width, float fill = 0.0f);

  Index height() const { return channels_[0].rows(); }
  Index width() const { return channels_[0].cols(); }
  bool empty() const { return channels_[0].size() == 0; }

  Plane& channel(int c) { return channels_[std::size_t(c)]; }
  const Plane& channel(int c) const { return channels_[std::size_t(c)]; }
  float& operator()(int c, Index y, Index x) { return channels_[std::size_t(c)](y, x); }
  float operator()(int c, Index y, Index x) const { return channels_[std::size_t(c)](y, x); }

  bool same_extent(const Image& other) const { return height() == other.height() && width() == other.width(); }
  bool operator==(const Image& other) const;

 private:
  std::array<Plane, 3> channels_;
};

/// Rounds every value to the nearest 8-bit level after clamping to [0,1].
Image quantize8(const Image& img);
Image crop(const Image& img, Index top, Index left, Index height, Index width);

/// Decodes any PNG (gray, palette, alpha and 16-bit are reduced to 8-bit RGB).
Image read_png(const std::filesystem::path& path);
/// Writes 8-bit RGB after clamping to [0,1].
void write_png(const std::filesystem::path& path, const Image& img);

/// [3×H×W] tensor view of an image.
template <typename T>
Tensor<T> to_tensor(const Image& img) {
  const Index h = img.height(), w = img.width();
  typename Tensor<T>::Array data(3 * h * w);
  for (int c = 0; c < 3; ++c)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) data[(c * h + y) * w + x] = T(img(c, y, x));
  return Tensor<T>({3, h, w}, std::move(data));
}

template <typename T>
Image to_image(const Tensor<T>& t, bool clamp_to_unit = true) {
  if (t.dim() != 3 || t.extent(0) != 3) throw ShapeError("to_image: expected [3xHxW], got " + shape_str(t.shape()));
  const Index h = t.extent(1), w = t.extent(2);
  Image img(h, w);
  for (int c = 0; c < 3; ++c)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        const float v = float(t.data()[(c * h + y) * w + x]);
        img(c, y, x) = clamp_to_unit ? std::min(1.0f, std::max(0.0f, v)) : v;
      }
  return img;
}

}  // namespace pfan
