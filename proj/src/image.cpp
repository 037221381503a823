#include "pfan/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

namespace pfan {

Image::Image(Index height, Index width, float fill) {
  if (height < 1 || width < 1) throw ShapeError("image: extents must be positive");
  for (auto& plane : channels_) plane = Plane::Constant(height, width, fill);
}

bool Image::operator==(const Image& other) const {
  if (!same_extent(other)) return false;
  for (int c = 0; c < 3; ++c) {
    if (!(channel(c) == other.channel(c)).all()) return false;
  }
  return true;
}

Image quantize8(const Image& img) {
  Image out = img;
  for (int c = 0; c < 3; ++c) {
    out.channel(c) = (img.channel(c).max(0.0f).min(1.0f) * 255.0f).round() / 255.0f;
  }
  return out;
}

Image crop(const Image& img, Index top, Index left, Index height, Index width) {
  if (top < 0 || left < 0 || top + height > img.height() || left + width > img.width()) {
    throw ShapeError("image crop: window out of bounds");
  }
  Image out(height, width);
  for (int c = 0; c < 3; ++c) out.channel(c) = img.channel(c).block(top, left, height, width);
  return out;
}

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw DecodeError("cannot decode " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw DecodeError("cannot decode " + path.string() + ": " + msg);
  }
  const Index h = png.height, w = png.width;
  Image img(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img(c, y, x) = float(buf[std::size_t((y * w + x) * 3 + c)]) / 255.0f;
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  const Index h = img.height(), w = img.width();
  std::vector<unsigned char> buf(std::size_t(h * w * 3));
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(img(c, y, x), 0.0f, 1.0f);
        buf[std::size_t((y * w + x) * 3 + c)] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = png_uint_32(w);
  png.height = png_uint_32(h);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("cannot write " + path.string() + ": " + png.message);
  }
}

}  // namespace pfan
