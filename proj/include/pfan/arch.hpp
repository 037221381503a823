#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pfan/image.hpp"
#include "pfan/nn.hpp"

namespace pfan {

/// Generator and discriminator topology.
struct PfanConfig {
  Index base_channels = 64;
  Index n_mbi = 4;
  Index n_lat = 2;
  std::vector<Index> mbi_kernels{3, 7, 11};
  Index mbi_groups = 64;
  Index mbi_expand_ratio = 4;
  Index lat_window = 8;
  Index leff_expand_ratio = 2;
  bool use_global_input_skip = true;
  Index disc_layers = 3;
  bool mbi_residual = false;

  /// Query/key and value widths of the attention layers (C/2 each).
  Index qk_channels() const { return std::max<Index>(1, base_channels / 2); }
  Index v_channels() const { return std::max<Index>(1, base_channels / 2); }

  void validate() const;
  /// Stable key=value rendering, used for config digests.
  std::string canonical() const;

  /// Small topology used by tests and the desk-scale training run.
  static PfanConfig desk();
};

template <typename T>
struct MbiParams {
  std::vector<Conv2dParams<T>> branches;  // grouped k×k convs, one per kernel size
  Conv2dParams<T> expand;                 // pointwise C → rC
  Conv2dParams<T> project;                // pointwise rC → C
  bool residual = false;
};

/// Projections of the squeeze-axial attention: q/k/v are [C_qk×C], [C_qk×C],
/// [C_v×C]; the output projection is [C×C_v]. None carry a bias.
template <typename T>
struct SeaParams {
  Tensor<T> w_q;
  Tensor<T> w_k;
  Tensor<T> w_v;
  Tensor<T> w_o;
};

template <typename T>
struct LeffParams {
  LinearParams<T> expand;     // C → rC
  Conv2dParams<T> depthwise;  // 3×3, groups = rC
  LinearParams<T> project;    // rC → C
};

template <typename T>
struct LatParams {
  NormParams<T> norm1;
  SeaParams<T> sea;
  NormParams<T> norm2;
  LeffParams<T> leff;
  Index window = 8;
};

template <typename T>
struct DiscParams {
  std::vector<Conv2dParams<T>> layers;  // stride-2 3×3 convs
  Conv2dParams<T> head;                 // stride-1 3×3 conv to one logit channel
};

template <typename T>
MbiParams<T> make_mbi(ParamStore<T>& store, const std::string& name, const PfanConfig& cfg, std::uint64_t seed);
template <typename T>
SeaParams<T> make_sea(ParamStore<T>& store, const std::string& name, Index channels, Index qk, Index v,
                      std::uint64_t seed);
template <typename T>
LeffParams<T> make_leff(ParamStore<T>& store, const std::string& name, Index channels, Index ratio, std::uint64_t seed);
template <typename T>
LatParams<T> make_lat(ParamStore<T>& store, const std::string& name, const PfanConfig& cfg, std::uint64_t seed);
template <typename T>
DiscParams<T> make_disc(ParamStore<T>& store, const std::string& name, const PfanConfig& cfg, std::uint64_t seed);

/// [C×H×W] ↔ [HW×C] token layout.
template <typename T>
Tensor<T> to_tokens(const Tensor<T>& x);
template <typename T>
Tensor<T> from_tokens(const Tensor<T>& tokens, Index height, Index width);

/// Sum of GELU(grouped conv) over the kernel set, then pointwise C→rC, GELU,
/// pointwise rC→C.
template <typename T>
Tensor<T> mbi_block(const Tensor<T>& x, const MbiParams<T>& p);

/// Squeeze-axial attention on one [C×H×W] map. Position (i, j) receives the
/// row-attention result of squeezed row i plus the column-attention result of
/// squeezed column j, followed by the C_v → C output projection. Logits are
/// unscaled dot products.
template <typename T>
Tensor<T> sea_attention(const Tensor<T>& x, const SeaParams<T>& p);

/// Global softmax attention over all H·W tokens with the same projections.
template <typename T>
Tensor<T> full_attention(const Tensor<T>& x, const SeaParams<T>& p);

/// Locally-enhanced feed-forward on [N×C] tokens of an h×w window.
template <typename T>
Tensor<T> leff(const Tensor<T>& tokens, const LeffParams<T>& p, Index height, Index width);

/// Pre-norm SEA + LEFF with residuals over non-overlapping windows.
/// Extents that are not multiples of the window are reflection padded at the
/// bottom/right and cropped back afterwards.
template <typename T>
Tensor<T> lat_block(const Tensor<T>& x, const LatParams<T>& p);

/// Per-channel gate sigmoid(LEFF(avg) + LEFF(max)) with one shared LEFF. [C]
template <typename T>
Tensor<T> channel_attention(const Tensor<T>& x, const LeffParams<T>& p);
/// x scaled per channel by channel_attention(x).
template <typename T>
Tensor<T> fusion_channel_attention(const Tensor<T>& x, const LeffParams<T>& p);

/// Stack of stride-2 convs with LeakyReLU(0.2) and a one-channel head.
/// Output extent is ceil(E / 2^L) for an input extent E and L layers.
template <typename T>
Tensor<T> patchgan_forward(const Tensor<T>& pair, const DiscParams<T>& p);
Index patchgan_output_extent(Index extent, Index layers);
/// Side length of the input square seen by one output logit: 2^(L+2) - 1.
Index patchgan_receptive_field(Index layers);

/// Named intermediate maps of one generator pass.
template <typename T>
struct GeneratorTrace {
  Tensor<T> stem;
  Tensor<T> high_freq;  // after the MBI stack
  Tensor<T> lat;        // after the LAT stack
  Tensor<T> low_freq;   // after channel-attention fusion
  Tensor<T> merged;     // high_freq + low_freq
  Tensor<T> output;     // RGB, unclamped
};

template <typename T>
class Generator {
 public:
  Generator(PfanConfig cfg, std::uint64_t seed);

  const PfanConfig& config() const { return cfg_; }
  const ParamStore<T>& params() const { return store_; }

  /// [3×H×W] → [3×H×W], unclamped (training path).
  Tensor<T> forward(const Tensor<T>& image) const;
  GeneratorTrace<T> trace(const Tensor<T>& image) const;

 private:
  PfanConfig cfg_;
  ParamStore<T> store_;
  Conv2dParams<T> stem_;
  std::vector<MbiParams<T>> mbi_;
  std::vector<LatParams<T>> lat_;
  LeffParams<T> fusion_;
  Conv2dParams<T> head_;
};

template <typename T>
class PatchDiscriminator {
 public:
  PatchDiscriminator(const PfanConfig& cfg, std::uint64_t seed);

  const ParamStore<T>& params() const { return store_; }
  /// [6×H×W] (condition, candidate) → [1×h×w] logits.
  Tensor<T> forward(const Tensor<T>& pair) const { return patchgan_forward(pair, disc_); }
  Tensor<T> forward(const Tensor<T>& condition, const Tensor<T>& candidate) const {
    return forward(concat_channels(std::vector<Tensor<T>>{condition, candidate}));
  }

 private:
  ParamStore<T> store_;
  DiscParams<T> disc_;
};

/// Inference: no graph, output clamped to [0,1].
Image desmoke(const Generator<float>& generator, const Image& input);

enum class AttentionKind { sea, full };

/// Multiplications performed by the attention operator proper, excluding the
/// q/k/v/output projections (identical for both kinds):
///   full: H²W²(C_qk + C_v) + HW·C_v
///   sea:  (H+W)(2C_qk + C_v) + (H²+W²)(C_qk + C_v) + (H+W)·C_v
/// The first sea term is the 1/W and 1/H scaling of the squeezes; the
/// trailing terms of both are the softmax normalization applied to each
/// C_v-wide result. Divisions count as multiplications; exp and additions do
/// not count. `channels` is accepted for interface symmetry.
std::int64_t flop_count(AttentionKind kind, Index channels, Index qk, Index v, Index height, Index width);

}  // namespace pfan
