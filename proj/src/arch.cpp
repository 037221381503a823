#include "pfan/arch.hpp"

#include <sstream>

namespace pfan {

void PfanConfig::validate() const {
  auto positive = [](Index v, const char* key) {
    if (v < 1) throw ConfigError(std::string(key) + " must be >= 1, got " + std::to_string(v));
  };
  positive(base_channels, "base_channels");
  positive(n_mbi, "n_mbi");
  positive(n_lat, "n_lat");
  positive(mbi_groups, "mbi_groups");
  positive(mbi_expand_ratio, "mbi_expand_ratio");
  positive(lat_window, "lat_window");
  positive(leff_expand_ratio, "leff_expand_ratio");
  positive(disc_layers, "disc_layers");
  if (base_channels % mbi_groups != 0) {
    throw ConfigError("mbi_groups " + std::to_string(mbi_groups) + " must divide base_channels " +
                      std::to_string(base_channels));
  }
  if (mbi_kernels.empty()) throw ConfigError("mbi_kernels must list at least one kernel size");
  for (Index k : mbi_kernels) {
    if (k < 1 || k % 2 == 0) throw ConfigError("mbi_kernels entries must be odd and positive");
  }
}

std::string PfanConfig::canonical() const {
  std::ostringstream os;
  os << "base_channels=" << base_channels << ";n_mbi=" << n_mbi << ";n_lat=" << n_lat << ";mbi_kernels=";
  for (std::size_t i = 0; i < mbi_kernels.size(); ++i) os << (i ? "," : "") << mbi_kernels[i];
  os << ";mbi_groups=" << mbi_groups << ";mbi_expand_ratio=" << mbi_expand_ratio << ";lat_window=" << lat_window
     << ";leff_expand_ratio=" << leff_expand_ratio << ";use_global_input_skip=" << use_global_input_skip
     << ";disc_layers=" << disc_layers << ";mbi_residual=" << mbi_residual;
  return os.str();
}

PfanConfig PfanConfig::desk() {
  PfanConfig cfg;
  cfg.base_channels = 16;
  cfg.mbi_groups = 16;
  cfg.n_mbi = 2;
  cfg.n_lat = 1;
  cfg.disc_layers = 2;
  cfg.mbi_residual = true;
  return cfg;
}

template <typename T>
MbiParams<T> make_mbi(ParamStore<T>& store, const std::string& name, const PfanConfig& cfg, std::uint64_t seed) {
  const Index c = cfg.base_channels;
  MbiParams<T> p;
  for (Index k : cfg.mbi_kernels) {
    p.branches.push_back(make_conv(store, name + ".gconv" + std::to_string(k),
                                   LayerSpec::conv(c, c, k, cfg.mbi_groups), seed));
  }
  p.expand = make_conv(store, name + ".expand", LayerSpec::pointwise(c, c * cfg.mbi_expand_ratio), seed);
  p.project = make_conv(store, name + ".project", LayerSpec::pointwise(c * cfg.mbi_expand_ratio, c), seed);
  p.residual = cfg.mbi_residual;
  return p;
}

template <typename T>
SeaParams<T> make_sea(ParamStore<T>& store, const std::string& name, Index channels, Index qk, Index v,
                      std::uint64_t seed) {
  SeaParams<T> p;
  p.w_q = make_matrix(store, name + ".w_q", qk, channels, seed);
  p.w_k = make_matrix(store, name + ".w_k", qk, channels, seed);
  p.w_v = make_matrix(store, name + ".w_v", v, channels, seed);
  p.w_o = make_matrix(store, name + ".w_o", channels, v, seed);
  return p;
}

template <typename T>
LeffParams<T> make_leff(ParamStore<T>& store, const std::string& name, Index channels, Index ratio,
                        std::uint64_t seed) {
  LeffParams<T> p;
  const Index hidden = channels * ratio;
  p.expand = make_linear(store, name + ".expand", LayerSpec::linear(channels, hidden), seed);
  p.depthwise = make_conv(store, name + ".depthwise", LayerSpec::depthwise(hidden, 3), seed);
  p.project = make_linear(store, name + ".project", LayerSpec::linear(hidden, channels), seed);
  return p;
}

template <typename T>
LatParams<T> make_lat(ParamStore<T>& store, const std::string& name, const PfanConfig& cfg, std::uint64_t seed) {
  LatParams<T> p;
  const Index c = cfg.base_channels;
  p.norm1 = make_norm(store, name + ".norm1", c);
  p.sea = make_sea(store, name + ".sea", c, cfg.qk_channels(), cfg.v_channels(), seed);
  p.norm2 = make_norm(store, name + ".norm2", c);
  p.leff = make_leff(store, name + ".leff", c, cfg.leff_expand_ratio, seed);
  p.window = cfg.lat_window;
  return p;
}

template <typename T>
DiscParams<T> make_disc(ParamStore<T>& store, const std::string& name, const PfanConfig& cfg, std::uint64_t seed) {
  DiscParams<T> p;
  Index in = 6;
  Index out = cfg.base_channels;
  for (Index l = 0; l < cfg.disc_layers; ++l) {
    p.layers.push_back(make_conv(store, name + ".conv" + std::to_string(l), LayerSpec::conv(in, out, 3), seed, 2, 1));
    in = out;
    out *= 2;
  }
  p.head = make_conv(store, name + ".head", LayerSpec::conv(in, 1, 3), seed, 1, 1);
  return p;
}

template <typename T>
Tensor<T> to_tokens(const Tensor<T>& x) {
  if (x.dim() != 3) throw ShapeError("to_tokens: expected [CxHxW], got " + shape_str(x.shape()));
  return transpose(reshape(x, {x.extent(0), x.extent(1) * x.extent(2)}));
}

template <typename T>
Tensor<T> from_tokens(const Tensor<T>& tokens, Index height, Index width) {
  if (tokens.dim() != 2 || tokens.extent(0) != height * width) {
    throw ShapeError("from_tokens: " + shape_str(tokens.shape()) + " is not " + std::to_string(height) + "x" +
                     std::to_string(width) + " tokens");
  }
  return reshape(transpose(tokens), {tokens.extent(1), height, width});
}

template <typename T>
Tensor<T> mbi_block(const Tensor<T>& x, const MbiParams<T>& p) {
  if (p.branches.empty()) throw ValueError("mbi_block: no branches");
  if (x.dim() != 3 || x.extent(0) != p.expand.weight.extent(1)) {
    throw ShapeError("mbi_block: input " + shape_str(x.shape()) + " does not match block channels " +
                     std::to_string(p.expand.weight.extent(1)));
  }
  Tensor<T> multi_scale;
  for (const auto& branch : p.branches) {
    Tensor<T> y = gelu(apply(branch, x));
    multi_scale = multi_scale.defined() ? add(multi_scale, y) : y;
  }
  Tensor<T> out = apply(p.project, gelu(apply(p.expand, multi_scale)));
  return p.residual ? add(out, x) : out;
}

template <typename T>
Tensor<T> sea_attention(const Tensor<T>& x, const SeaParams<T>& p) {
  if (x.dim() != 3) throw ShapeError("sea_attention: expected [CxHxW], got " + shape_str(x.shape()));
  const Index c = x.extent(0), h = x.extent(1), w = x.extent(2);
  const Index qk = p.w_q.extent(0), cv = p.w_v.extent(0);
  const Tensor<T> flat = reshape(x, {c, h * w});
  const Tensor<T> q = reshape(matmul(p.w_q, flat), {qk, h, w});
  const Tensor<T> k = reshape(matmul(p.w_k, flat), {qk, h, w});
  const Tensor<T> v = reshape(matmul(p.w_v, flat), {cv, h, w});

  // Horizontal squeeze averages over W (one vector per row), vertical over H.
  auto rows = [](const Tensor<T>& t) { return transpose(mean_along_axis(t, 2)); };  // [H×C]
  auto cols = [](const Tensor<T>& t) { return transpose(mean_along_axis(t, 1)); };  // [W×C]

  const Tensor<T> row_out = matmul(softmax(matmul(rows(q), transpose(rows(k))), 1), rows(v));  // [H×C_v]
  const Tensor<T> col_out = matmul(softmax(matmul(cols(q), transpose(cols(k))), 1), cols(v));  // [W×C_v]

  const Tensor<T> y = add(reshape(transpose(row_out), {cv, h, 1}), reshape(transpose(col_out), {cv, 1, w}));
  return reshape(matmul(p.w_o, reshape(y, {cv, h * w})), {c, h, w});
}

template <typename T>
Tensor<T> full_attention(const Tensor<T>& x, const SeaParams<T>& p) {
  if (x.dim() != 3) throw ShapeError("full_attention: expected [CxHxW], got " + shape_str(x.shape()));
  const Index c = x.extent(0), h = x.extent(1), w = x.extent(2);
  const Tensor<T> flat = reshape(x, {c, h * w});
  const Tensor<T> q = matmul(p.w_q, flat);
  const Tensor<T> k = matmul(p.w_k, flat);
  const Tensor<T> v = matmul(p.w_v, flat);
  const Tensor<T> attn = softmax(matmul(transpose(q), k), 1);  // [HW×HW]
  const Tensor<T> y = matmul(attn, transpose(v));               // [HW×C_v]
  return reshape(matmul(p.w_o, transpose(y)), {c, h, w});
}

template <typename T>
Tensor<T> leff(const Tensor<T>& tokens, const LeffParams<T>& p, Index height, Index width) {
  if (tokens.dim() != 2 || tokens.extent(0) != height * width) {
    throw ShapeError("leff: " + shape_str(tokens.shape()) + " tokens do not form a " + std::to_string(height) + "x" +
                     std::to_string(width) + " window");
  }
  const Tensor<T> hidden = leaky_relu(apply(p.expand, tokens));
  const Tensor<T> local = leaky_relu(apply(p.depthwise, from_tokens(hidden, height, width)));
  return leaky_relu(apply(p.project, to_tokens(local)));
}

namespace {

template <typename T>
Tensor<T> lat_window(const Tensor<T>& x, const LatParams<T>& p) {
  const Index h = x.extent(1), w = x.extent(2);
  const Tensor<T> attended = add(sea_attention(from_tokens(apply(p.norm1, to_tokens(x)), h, w), p.sea), x);
  const Tensor<T> fed = leff(apply(p.norm2, to_tokens(attended)), p.leff, h, w);
  return add(from_tokens(fed, h, w), attended);
}

}  // namespace

template <typename T>
Tensor<T> lat_block(const Tensor<T>& x, const LatParams<T>& p) {
  if (x.dim() != 3) throw ShapeError("lat_block: expected [CxHxW], got " + shape_str(x.shape()));
  const Index h = x.extent(1), w = x.extent(2), win = p.window;
  const Index pad_h = (win - h % win) % win, pad_w = (win - w % win) % win;
  const Tensor<T> padded = (pad_h || pad_w) ? pad_reflect(x, pad_h, pad_w) : x;
  const Index ph = h + pad_h, pw = w + pad_w;

  Tensor<T> out;
  if (ph == win && pw == win) {
    out = lat_window(padded, p);
  } else {
    std::vector<Tensor<T>> bands;
    for (Index top = 0; top < ph; top += win) {
      std::vector<Tensor<T>> row;
      for (Index left = 0; left < pw; left += win) row.push_back(lat_window(crop(padded, top, left, win, win), p));
      bands.push_back(row.size() == 1 ? row.front() : concat(row, 2));
    }
    out = bands.size() == 1 ? bands.front() : concat(bands, 1);
  }
  return (pad_h || pad_w) ? crop(out, 0, 0, h, w) : out;
}

template <typename T>
Tensor<T> channel_attention(const Tensor<T>& x, const LeffParams<T>& p) {
  const Index c = x.extent(0);
  const Tensor<T> avg = leff(reshape(avg_pool_spatial(x), {1, c}), p, 1, 1);
  const Tensor<T> max = leff(reshape(max_pool_spatial(x), {1, c}), p, 1, 1);
  return reshape(sigmoid(add(avg, max)), {c});
}

template <typename T>
Tensor<T> fusion_channel_attention(const Tensor<T>& x, const LeffParams<T>& p) {
  return mul(x, reshape(channel_attention(x, p), {x.extent(0), 1, 1}));
}

template <typename T>
Tensor<T> patchgan_forward(const Tensor<T>& pair, const DiscParams<T>& p) {
  if (pair.dim() != 3 || pair.extent(0) != 6) {
    throw ShapeError("patchgan: expected [6xHxW] image pair, got " + shape_str(pair.shape()));
  }
  Tensor<T> h = pair;
  for (const auto& layer : p.layers) h = leaky_relu(apply(layer, h), T(0.2));
  return apply(p.head, h);
}

Index patchgan_output_extent(Index extent, Index layers) {
  for (Index l = 0; l < layers; ++l) extent = conv_output_extent(extent, 3, 2, 1);
  return extent;
}

Index patchgan_receptive_field(Index layers) { return (Index(1) << (layers + 2)) - 1; }

template <typename T>
Generator<T>::Generator(PfanConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const Index c = cfg_.base_channels;
  stem_ = make_conv(store_, "stem", LayerSpec::conv(3, c, 3), seed);
  for (Index i = 0; i < cfg_.n_mbi; ++i) mbi_.push_back(make_mbi(store_, "mbi" + std::to_string(i), cfg_, seed));
  for (Index i = 0; i < cfg_.n_lat; ++i) lat_.push_back(make_lat(store_, "lat" + std::to_string(i), cfg_, seed));
  fusion_ = make_leff(store_, "fusion.leff", c, cfg_.leff_expand_ratio, seed);
  head_ = make_conv(store_, "head", LayerSpec::conv(c, 3, 3), seed);
}

template <typename T>
GeneratorTrace<T> Generator<T>::trace(const Tensor<T>& image) const {
  if (image.dim() != 3 || image.extent(0) != 3) {
    throw ShapeError("generator: expected a 3-channel [3xHxW] image, got " + shape_str(image.shape()));
  }
  GeneratorTrace<T> t;
  t.stem = apply(stem_, image);
  t.high_freq = t.stem;
  for (const auto& block : mbi_) t.high_freq = mbi_block(t.high_freq, block);

  // Pad once for the whole LAT stack so every block sees whole windows.
  const Index h = image.extent(1), w = image.extent(2), win = cfg_.lat_window;
  const Index pad_h = (win - h % win) % win, pad_w = (win - w % win) % win;
  t.lat = (pad_h || pad_w) ? pad_reflect(t.high_freq, pad_h, pad_w) : t.high_freq;
  for (const auto& block : lat_) t.lat = lat_block(t.lat, block);
  if (pad_h || pad_w) t.lat = crop(t.lat, 0, 0, h, w);

  t.low_freq = fusion_channel_attention(t.lat, fusion_);
  t.merged = add(t.high_freq, t.low_freq);
  t.output = apply(head_, t.merged);
  if (cfg_.use_global_input_skip) t.output = add(t.output, image);
  return t;
}

template <typename T>
Tensor<T> Generator<T>::forward(const Tensor<T>& image) const {
  return trace(image).output;
}

template <typename T>
PatchDiscriminator<T>::PatchDiscriminator(const PfanConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  disc_ = make_disc(store_, "disc", cfg, seed);
}

Image desmoke(const Generator<float>& generator, const Image& input) {
  NoGradGuard no_grad;
  return to_image(generator.forward(to_tensor<float>(input)), true);
}

std::int64_t flop_count(AttentionKind kind, Index channels, Index qk, Index v, Index height, Index width) {
  if (channels < 1 || qk < 1 || v < 1 || height < 1 || width < 1) {
    throw ValueError("flop_count: extents must be positive");
  }
  const std::int64_t h = height, w = width;
  if (kind == AttentionKind::full) {
    const std::int64_t n = h * w;
    return n * n * (qk + v) + n * v;
  }
  return (h + w) * (2 * qk + v) + (h * h + w * w) * (qk + v) + (h + w) * v;
}

#define PFAN_INSTANTIATE_ARCH(T)                                                                                     \
  template MbiParams<T> make_mbi(ParamStore<T>&, const std::string&, const PfanConfig&, std::uint64_t);              \
  template SeaParams<T> make_sea(ParamStore<T>&, const std::string&, Index, Index, Index, std::uint64_t);            \
  template LeffParams<T> make_leff(ParamStore<T>&, const std::string&, Index, Index, std::uint64_t);                 \
  template LatParams<T> make_lat(ParamStore<T>&, const std::string&, const PfanConfig&, std::uint64_t);              \
  template DiscParams<T> make_disc(ParamStore<T>&, const std::string&, const PfanConfig&, std::uint64_t);            \
  template Tensor<T> to_tokens(const Tensor<T>&);                                                                    \
  template Tensor<T> from_tokens(const Tensor<T>&, Index, Index);                                                    \
  template Tensor<T> mbi_block(const Tensor<T>&, const MbiParams<T>&);                                               \
  template Tensor<T> sea_attention(const Tensor<T>&, const SeaParams<T>&);                                           \
  template Tensor<T> full_attention(const Tensor<T>&, const SeaParams<T>&);                                          \
  template Tensor<T> leff(const Tensor<T>&, const LeffParams<T>&, Index, Index);                                     \
  template Tensor<T> lat_block(const Tensor<T>&, const LatParams<T>&);                                               \
  template Tensor<T> channel_attention(const Tensor<T>&, const LeffParams<T>&);                                      \
  template Tensor<T> fusion_channel_attention(const Tensor<T>&, const LeffParams<T>&);                               \
  template Tensor<T> patchgan_forward(const Tensor<T>&, const DiscParams<T>&);                                       \
  template class Generator<T>;                                                                                       \
  template class PatchDiscriminator<T>;

PFAN_INSTANTIATE_ARCH(float)
PFAN_INSTANTIATE_ARCH(double)

#undef PFAN_INSTANTIATE_ARCH

}  // namespace pfan
