#include "pfan/nn.hpp"

#include <random>

namespace pfan {

LayerSpec LayerSpec::conv(Index in, Index out, Index kernel, Index groups, bool bias) {
  return {LayerKind::conv, in, out, kernel, groups, Activation::none, bias};
}

LayerSpec LayerSpec::pointwise(Index in, Index out, bool bias) {
  return {LayerKind::pointwise, in, out, 1, 1, Activation::none, bias};
}

LayerSpec LayerSpec::depthwise(Index channels, Index kernel) {
  return {LayerKind::depthwise, channels, channels, kernel, channels, Activation::none, true};
}

LayerSpec LayerSpec::linear(Index in, Index out, bool bias) {
  return {LayerKind::linear, in, out, 1, 1, Activation::none, bias};
}

LayerSpec LayerSpec::norm(Index channels) {
  return {LayerKind::norm, channels, channels, 1, 1, Activation::none, true};
}

void LayerSpec::validate() const {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || groups < 1) {
    throw ValueError("layer spec: extents must be positive");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw ValueError("layer spec: groups " + std::to_string(groups) + " must divide " + std::to_string(in_channels) +
                     " and " + std::to_string(out_channels));
  }
  switch (kind) {
    case LayerKind::pointwise:
    case LayerKind::linear:
      if (kernel != 1 || groups != 1) throw ValueError("layer spec: pointwise/linear layers take kernel 1, groups 1");
      break;
    case LayerKind::depthwise:
      if (groups != in_channels || in_channels != out_channels) {
        throw ValueError("layer spec: depthwise layer needs groups == in == out");
      }
      [[fallthrough]];
    case LayerKind::conv:
      if (kernel % 2 == 0) throw ValueError("layer spec: kernel must be odd");
      break;
    case LayerKind::norm:
      if (in_channels != out_channels) throw ValueError("layer spec: norm maps C to C");
      break;
  }
}

Shape LayerSpec::weight_shape() const {
  switch (kind) {
    case LayerKind::linear:
      return {out_channels, in_channels};
    case LayerKind::norm:
      return {out_channels};
    default:
      return {out_channels, in_channels / groups, kernel, kernel};
  }
}

Index LayerSpec::param_count() const {
  validate();
  const Index weights = shape_numel(weight_shape());
  if (kind == LayerKind::norm) return 2 * out_channels;
  return weights + (bias ? out_channels : 0);
}

std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = fnv1a(&seed, sizeof seed);
  return fnv1a(name.data(), name.size(), h);
}

template <typename T>
std::vector<NamedTensor<T>> init_params(const LayerSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<NamedTensor<T>> out;
  if (spec.kind == LayerKind::norm) {
    out.push_back({"gamma", ones<T>({spec.out_channels})});
    out.push_back({"beta", zeros<T>({spec.out_channels})});
    return out;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  Tensor<T> weight(spec.weight_shape());
  auto& w = weight.mutable_data();
  for (Index i = 0; i < w.size(); ++i) w[i] = T(normal(rng));
  out.push_back({"weight", weight});
  if (spec.bias) out.push_back({"bias", zeros<T>({spec.out_channels})});
  return out;
}

template <typename T>
void ParamStore<T>::add(std::string name, Tensor<T> tensor) {
  if (contains(name)) throw ValueError("param store: duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(tensor));
}

template <typename T>
const Tensor<T>& ParamStore<T>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValueError("param store: no parameter '" + name + "'");
  return entries_[it->second].second;
}

template <typename T>
Index ParamStore<T>::count() const {
  Index n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() const {
  for (const auto& [name, t] : entries_) t.zero_grad();
}

template <typename T>
void ParamStore<T>::set_requires_grad(bool flag) const {
  for (const auto& [name, t] : entries_) t.set_requires_grad(flag);
}

template <typename T>
void ParamStore<T>::fill(T value) const {
  for (const auto& [name, t] : entries_) t.mutable_data().setConstant(value);
}

template <typename T>
std::uint64_t ParamStore<T>::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, t] : entries_) {
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(t.data().data(), std::size_t(t.size()) * sizeof(T), h);
  }
  return h;
}

template <typename T>
void ParamStore<T>::assign(const ParamStore& other) const {
  for (const auto& [name, t] : entries_) {
    if (!other.contains(name)) throw ShapeError("weights: missing parameter '" + name + "'");
    const Tensor<T>& src = other.at(name);
    if (src.shape() != t.shape()) {
      throw ShapeError("weights: parameter '" + name + "' has shape " + shape_str(src.shape()) + ", model expects " +
                       shape_str(t.shape()));
    }
  }
  for (const auto& [name, t] : other) {
    if (!contains(name)) throw ShapeError("weights: unexpected parameter '" + name + "'");
  }
  for (const auto& [name, t] : entries_) t.mutable_data() = other.at(name).data();
}

template <typename T>
bool ParamStore<T>::equals(const ParamStore& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& [na, a] = entries_[i];
    const auto& [nb, b] = other.entries_[i];
    if (na != nb || a.shape() != b.shape() || !(a.data() == b.data()).all()) return false;
  }
  return true;
}

template <typename T>
Conv2dParams<T> make_conv(ParamStore<T>& store, const std::string& name, const LayerSpec& spec, std::uint64_t seed,
                          Index stride, Index padding) {
  if (spec.kind == LayerKind::linear || spec.kind == LayerKind::norm) {
    throw ValueError("make_conv: '" + name + "' is not a convolution spec");
  }
  Conv2dParams<T> p;
  for (auto& [suffix, t] : init_params<T>(spec, derive_seed(seed, name))) {
    t.set_requires_grad(true);
    (suffix == "weight" ? p.weight : p.bias) = t;
    store.add(name + "." + suffix, t);
  }
  p.options = {stride, padding < 0 ? (spec.kernel - 1) / 2 : padding, spec.groups};
  return p;
}

template <typename T>
LinearParams<T> make_linear(ParamStore<T>& store, const std::string& name, const LayerSpec& spec, std::uint64_t seed) {
  if (spec.kind != LayerKind::linear) throw ValueError("make_linear: '" + name + "' is not a linear spec");
  LinearParams<T> p;
  for (auto& [suffix, t] : init_params<T>(spec, derive_seed(seed, name))) {
    t.set_requires_grad(true);
    (suffix == "weight" ? p.weight : p.bias) = t;
    store.add(name + "." + suffix, t);
  }
  return p;
}

template <typename T>
NormParams<T> make_norm(ParamStore<T>& store, const std::string& name, Index channels) {
  NormParams<T> p;
  for (auto& [suffix, t] : init_params<T>(LayerSpec::norm(channels), 0)) {
    t.set_requires_grad(true);
    (suffix == "gamma" ? p.gamma : p.beta) = t;
    store.add(name + "." + suffix, t);
  }
  return p;
}

template <typename T>
Tensor<T> make_matrix(ParamStore<T>& store, const std::string& name, Index out, Index in, std::uint64_t seed) {
  auto entries = init_params<T>(LayerSpec::linear(in, out, false), derive_seed(seed, name));
  Tensor<T> w = entries.front().tensor;
  w.set_requires_grad(true);
  store.add(name, w);
  return w;
}

#define PFAN_INSTANTIATE_NN(T)                                                                                   \
  template std::vector<NamedTensor<T>> init_params<T>(const LayerSpec&, std::uint64_t);                          \
  template class ParamStore<T>;                                                                                  \
  template Conv2dParams<T> make_conv(ParamStore<T>&, const std::string&, const LayerSpec&, std::uint64_t, Index, \
                                     Index);                                                                     \
  template LinearParams<T> make_linear(ParamStore<T>&, const std::string&, const LayerSpec&, std::uint64_t);     \
  template NormParams<T> make_norm(ParamStore<T>&, const std::string&, Index);                                   \
  template Tensor<T> make_matrix(ParamStore<T>&, const std::string&, Index, Index, std::uint64_t);

PFAN_INSTANTIATE_NN(float)
PFAN_INSTANTIATE_NN(double)

#undef PFAN_INSTANTIATE_NN

}  // namespace pfan
