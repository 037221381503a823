#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string_view>
#include <vector>

#include "pfan/arch.hpp"
#include "pfan/dataset.hpp"

namespace pfan {

enum class AdvLoss { least_squares, cross_entropy };

AdvLoss parse_adv_loss(std::string_view name);
std::string_view to_string(AdvLoss loss);

struct TrainConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  Index batch = 6;
  Index crop = 128;
  Index d_warmup_epochs = 1;
  Index epochs = 100;
  Index max_steps = 0;  // cap on alternating steps, 0 = no cap
  double lambda_l1 = 100.0;
  std::uint64_t seed = 0;
  AdvLoss adv_loss = AdvLoss::least_squares;
  Index checkpoint_every = 0;  // alternating steps between checkpoints, 0 = final only
  std::filesystem::path out_dir;  // empty: no files are written

  void validate(const PfanConfig& model) const;
  /// 32×32 crops, otherwise the defaults.
  static TrainConfig desk();
};

/// Bias-corrected Adam moments for every parameter of one store.
template <typename T>
struct AdamState {
  std::vector<typename Tensor<T>::Array> m, v;
  Index step = 0;
};

/// One Adam update of every parameter that holds a gradient. Parameters are
/// updated in place; moments are allocated on first use.
template <typename T>
void adam_step(const ParamStore<T>& params, AdamState<T>& state, const TrainConfig& cfg);

template <typename T>
struct GeneratorLoss {
  Tensor<T> total;        // adversarial + λ·l1
  Tensor<T> adversarial;
  Tensor<T> l1;           // mean |g_out − target|
};

/// Least squares: ½[mean((d_real−1)²) + mean(d_fake²)].
/// Cross entropy on logits: mean(softplus(−d_real)) + mean(softplus(d_fake)).
template <typename T>
Tensor<T> discriminator_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake, AdvLoss kind);

/// Least squares: mean((d_fake−1)²); cross entropy: mean(softplus(−d_fake)).
template <typename T>
GeneratorLoss<T> generator_loss(const Tensor<T>& d_fake, const Tensor<T>& g_out, const Tensor<T>& target,
                                double lambda_l1, AdvLoss kind);

template <typename T>
struct GanLosses {
  Tensor<T> loss_d, loss_g;
};

template <typename T>
GanLosses<T> gan_losses(const Tensor<T>& d_real, const Tensor<T>& d_fake, const Tensor<T>& g_out,
                        const Tensor<T>& target, double lambda_l1 = 100.0, AdvLoss kind = AdvLoss::least_squares);

/// Same-offset crop of a syn/clean pair; offsets are uniform over all valid
/// positions. Throws ShapeError when the crop does not fit.
struct CroppedPair {
  Image syn, clean;
  Index top = 0, left = 0;
};
CroppedPair random_crop_pair(const Image& syn, const Image& clean, Index crop, std::mt19937_64& rng);

struct StepRecord {
  Index step = 0;        // global batch counter, warmup included
  bool warmup = false;   // D-only step
  double loss_d = 0.0;
  double loss_g = 0.0;   // evaluated without updating G during warmup
  double l1 = 0.0;
  // Weight checksums bracketing the updates of the other network.
  std::uint64_t g_before_d = 0, g_after_d = 0;
  std::uint64_t d_before_g = 0, d_after_g = 0;
};

struct TrainResult {
  Generator<float> generator;
  PatchDiscriminator<float> discriminator;
  std::vector<StepRecord> log;
  std::vector<std::filesystem::path> checkpoints;
};

/// D warmup for d_warmup_epochs over the train split, then per batch one D
/// step (G fixed) and one G step (D frozen). Deterministic in cfg.seed. With
/// out_dir set, writes train_log.tsv, checkpoints/ and final weights.
TrainResult train(const Manifest& manifest, const PfanConfig& model, const TrainConfig& cfg);

/// Writes the scalar log: '#step\tloss_D\tloss_G\tl1' then one line per step.
void write_train_log(const std::vector<StepRecord>& log, const std::filesystem::path& file);

}  // namespace pfan
