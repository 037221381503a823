#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pfan/nn.hpp"

namespace pfan {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
void put_le(std::string& out, U value) {
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(U));
}

class Reader {
 public:
  Reader(const std::string& buf, const std::filesystem::path& path) : buf_(buf), path_(path) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    unsigned char bytes[sizeof(U)];
    std::memcpy(bytes, buf_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
    pos_ += sizeof(U);
    U value;
    std::memcpy(&value, bytes, sizeof(U));
    return value;
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (buf_.size() - pos_ < n) {
      throw FormatError("weights file " + path_.string() + ": truncated while reading " + what);
    }
  }

  const std::string& buf_;
  std::filesystem::path path_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
void save_weights(const ParamStore<T>& store, const std::filesystem::path& path) {
  std::string out(kWeightsMagic, sizeof kWeightsMagic);
  put_le<std::uint32_t>(out, kWeightsVersion);
  put_le<std::uint32_t>(out, sizeof(T));
  put_le<std::uint64_t>(out, store.size());
  for (const auto& [name, t] : store) {
    put_le<std::uint32_t>(out, std::uint32_t(name.size()));
    out += name;
    put_le<std::uint32_t>(out, std::uint32_t(t.dim()));
    for (Index e : t.shape()) put_le<std::uint64_t>(out, std::uint64_t(e));
    for (Index i = 0; i < t.size(); ++i) put_le<T>(out, t.data()[i]);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

template <typename T>
ParamStore<T> load_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open weights file " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader in(buf, path);
  if (in.bytes(sizeof kWeightsMagic, "magic") != std::string(kWeightsMagic, sizeof kWeightsMagic)) {
    throw FormatError("weights file " + path.string() + ": bad magic");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kWeightsVersion) {
    throw FormatError("weights file " + path.string() + ": version " + std::to_string(version) + ", expected " +
                      std::to_string(kWeightsVersion));
  }
  const auto scalar_bytes = in.get<std::uint32_t>("scalar width");
  if (scalar_bytes != sizeof(T)) {
    throw FormatError("weights file " + path.string() + ": stores " + std::to_string(scalar_bytes) +
                      "-byte scalars, expected " + std::to_string(sizeof(T)));
  }
  const auto count = in.get<std::uint64_t>("entry count");
  ParamStore<T> store;
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto name_len = in.get<std::uint32_t>("name length");
    std::string name = in.bytes(name_len, "name");
    const auto rank = in.get<std::uint32_t>("rank");
    if (rank == 0 || rank > 8) throw FormatError("weights file " + path.string() + ": bad rank for '" + name + "'");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto extent = in.get<std::uint64_t>("extent");
      if (extent == 0 || extent > (1ULL << 32)) {
        throw FormatError("weights file " + path.string() + ": bad extent for '" + name + "'");
      }
      shape.push_back(Index(extent));
    }
    typename Tensor<T>::Array data(shape_numel(shape));
    for (Index i = 0; i < data.size(); ++i) data[i] = in.get<T>("scalars");
    store.add(std::move(name), Tensor<T>(std::move(shape), std::move(data)));
  }
  if (!in.at_end()) throw FormatError("weights file " + path.string() + ": trailing bytes");
  return store;
}

template <typename T>
void load_weights_into(const ParamStore<T>& store, const std::filesystem::path& path) {
  store.assign(load_weights<T>(path));
}

template void save_weights(const ParamStore<float>&, const std::filesystem::path&);
template void save_weights(const ParamStore<double>&, const std::filesystem::path&);
template ParamStore<float> load_weights(const std::filesystem::path&);
template ParamStore<double> load_weights(const std::filesystem::path&);
template void load_weights_into(const ParamStore<float>&, const std::filesystem::path&);
template void load_weights_into(const ParamStore<double>&, const std::filesystem::path&);

}  // namespace pfan
