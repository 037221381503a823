#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pfan/ops.hpp"
#include "pfan/tensor.hpp"

namespace pfan {

enum class LayerKind { conv, pointwise, depthwise, linear, norm };
enum class Activation { none, gelu, leaky_relu, sigmoid };

/// Shape description of one parameterized layer.
struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  Index in_channels = 1;
  Index out_channels = 1;
  Index kernel = 1;
  Index groups = 1;
  Activation activation = Activation::none;
  bool bias = true;

  static LayerSpec conv(Index in, Index out, Index kernel, Index groups = 1, bool bias = true);
  static LayerSpec pointwise(Index in, Index out, bool bias = true);
  static LayerSpec depthwise(Index channels, Index kernel);
  static LayerSpec linear(Index in, Index out, bool bias = true);
  static LayerSpec norm(Index channels);

  void validate() const;
  Shape weight_shape() const;
  Index param_count() const;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Weights ~ Normal(0, 0.02), biases 0, norm gains 1. A pure function of
/// (spec, seed). Entries are named "weight"/"bias" or "gamma"/"beta".
template <typename T>
std::vector<NamedTensor<T>> init_params(const LayerSpec& spec, std::uint64_t seed);

/// Seed for a named sub-layer, derived from a model-level seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);
std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h = 1469598103934665603ULL);

/// Named parameters in registration order.
template <typename T>
class ParamStore {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  void add(std::string name, Tensor<T> tensor);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<T>& at(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Sum of element counts over all entries.
  Index count() const;
  void zero_grad() const;
  void set_requires_grad(bool flag) const;
  void fill(T value) const;
  /// FNV-1a over names and raw scalar bytes.
  std::uint64_t checksum() const;
  /// Copies values from `other`, which must hold identically named and shaped
  /// entries. Throws ShapeError naming the first offending parameter; no
  /// entry is modified on failure.
  void assign(const ParamStore& other) const;
  bool equals(const ParamStore& other) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
Index count_params(const ParamStore<T>& store) {
  return store.count();
}

// Weight files: see docs/weights_format.md.
inline constexpr char kWeightsMagic[8] = {'P', 'F', 'A', 'N', 'W', 'G', 'T', '\0'};
inline constexpr std::uint32_t kWeightsVersion = 1;

template <typename T>
void save_weights(const ParamStore<T>& store, const std::filesystem::path& path);
template <typename T>
ParamStore<T> load_weights(const std::filesystem::path& path);
/// Loads a file into an existing model's store after checking every name and
/// shape.
template <typename T>
void load_weights_into(const ParamStore<T>& store, const std::filesystem::path& path);

// Layer parameter bundles. Tensors alias the entries registered in the store.

template <typename T>
struct Conv2dParams {
  Tensor<T> weight;
  Tensor<T> bias;
  Conv2dOptions options;
};

template <typename T>
struct LinearParams {
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
struct NormParams {
  Tensor<T> gamma;
  Tensor<T> beta;
};

/// Registers a conv layer. padding < 0 selects same-padding (k-1)/2.
template <typename T>
Conv2dParams<T> make_conv(ParamStore<T>& store, const std::string& name, const LayerSpec& spec, std::uint64_t seed,
                          Index stride = 1, Index padding = -1);
template <typename T>
LinearParams<T> make_linear(ParamStore<T>& store, const std::string& name, const LayerSpec& spec, std::uint64_t seed);
template <typename T>
NormParams<T> make_norm(ParamStore<T>& store, const std::string& name, Index channels);
/// A bias-free weight matrix [out×in].
template <typename T>
Tensor<T> make_matrix(ParamStore<T>& store, const std::string& name, Index out, Index in, std::uint64_t seed);

template <typename T>
Tensor<T> apply(const Conv2dParams<T>& p, const Tensor<T>& x) {
  return conv2d(x, p.weight, p.bias, p.options);
}
template <typename T>
Tensor<T> apply(const LinearParams<T>& p, const Tensor<T>& x) {
  return linear(x, p.weight, p.bias);
}
template <typename T>
Tensor<T> apply(const NormParams<T>& p, const Tensor<T>& x) {
  return layer_norm(x, p.gamma, p.beta);
}

}  // namespace pfan
