#include "pfan/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "pfan/error.hpp"
#include "pfan/ops.hpp"

namespace fs = std::filesystem;

namespace pfan {
namespace {

struct Pair {
  Image syn, clean;
};

std::vector<Pair> load_train_pairs(const Manifest& manifest, Index crop) {
  std::vector<Pair> pairs;
  for (const auto& row : manifest.rows_in("train")) {
    Pair p{read_png(manifest.resolve(row.syn)), read_png(manifest.resolve(row.clean))};
    if (!p.syn.same_extent(p.clean)) throw DatasetError("train pair " + row.syn + ": syn and clean extents differ");
    if (crop > p.syn.height() || crop > p.syn.width()) {
      throw DatasetError("crop " + std::to_string(crop) + " exceeds train image " + row.syn + " (" +
                         std::to_string(p.syn.height()) + "x" + std::to_string(p.syn.width()) + ")");
    }
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw DatasetError("manifest has no train pairs");
  return pairs;
}

struct Sample {
  Tensor<float> syn, clean;
};

Sample cropped(const Pair& p, Index crop, std::mt19937_64& rng) {
  const CroppedPair c = random_crop_pair(p.syn, p.clean, crop, rng);
  return {to_tensor<float>(c.syn), to_tensor<float>(c.clean)};
}

std::string step_name(const char* prefix, Index step) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_step%06lld.pfw", prefix, static_cast<long long>(step));
  return buf;
}

}  // namespace

CroppedPair random_crop_pair(const Image& syn, const Image& clean, Index crop, std::mt19937_64& rng) {
  if (!syn.same_extent(clean)) throw ShapeError("random_crop_pair: syn and clean extents differ");
  if (crop < 1 || crop > syn.height() || crop > syn.width()) {
    throw ShapeError("random_crop_pair: crop " + std::to_string(crop) + " does not fit the image");
  }
  CroppedPair out;
  out.top = std::uniform_int_distribution<Index>(0, syn.height() - crop)(rng);
  out.left = std::uniform_int_distribution<Index>(0, syn.width() - crop)(rng);
  out.syn = pfan::crop(syn, out.top, out.left, crop, crop);
  out.clean = pfan::crop(clean, out.top, out.left, crop, crop);
  return out;
}

AdvLoss parse_adv_loss(std::string_view name) {
  if (name == "least_squares" || name == "lsgan") return AdvLoss::least_squares;
  if (name == "cross_entropy" || name == "bce") return AdvLoss::cross_entropy;
  throw ValueError("unknown adversarial loss '" + std::string(name) + "' (least_squares|cross_entropy)");
}

std::string_view to_string(AdvLoss loss) {
  return loss == AdvLoss::least_squares ? "least_squares" : "cross_entropy";
}

void TrainConfig::validate(const PfanConfig& model) const {
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1 must lie in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2 must lie in [0,1)");
  if (!(eps > 0.0)) throw ConfigError("train.eps must be positive");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (crop < model.lat_window) throw ConfigError("train.crop must be >= model.lat_window");
  if (d_warmup_epochs < 0) throw ConfigError("train.d_warmup_epochs must be >= 0");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
  if (!(lambda_l1 >= 0.0)) throw ConfigError("train.lambda_l1 must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.crop = 32;
  return c;
}

template <typename T>
void adam_step(const ParamStore<T>& params, AdamState<T>& state, const TrainConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& [name, tensor] : params) {
      state.m.push_back(Tensor<T>::Array::Zero(tensor.size()));
      state.v.push_back(Tensor<T>::Array::Zero(tensor.size()));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state does not match the parameter store");
  ++state.step;
  const T b1 = T(cfg.beta1), b2 = T(cfg.beta2), lr = T(cfg.lr), eps = T(cfg.eps);
  const T c1 = T(1) - T(std::pow(cfg.beta1, double(state.step)));
  const T c2 = T(1) - T(std::pow(cfg.beta2, double(state.step)));
  std::size_t i = 0;
  for (const auto& [name, tensor] : params) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    ++i;
    if (m.size() != tensor.size()) throw ShapeError("adam_step: moment shape mismatch for " + name);
    if (!tensor.has_grad()) continue;
    const auto g = tensor.grad();
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.square();
    tensor.mutable_data() -= lr * (m / c1) / ((v / c2).sqrt() + eps);
  }
}

template <typename T>
Tensor<T> discriminator_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake, AdvLoss kind) {
  if (kind == AdvLoss::least_squares) {
    return scale(add(mean(square(add_scalar(d_real, T(-1)))), mean(square(d_fake))), T(0.5));
  }
  return add(mean(softplus(scale(d_real, T(-1)))), mean(softplus(d_fake)));
}

template <typename T>
GeneratorLoss<T> generator_loss(const Tensor<T>& d_fake, const Tensor<T>& g_out, const Tensor<T>& target,
                                double lambda_l1, AdvLoss kind) {
  GeneratorLoss<T> out;
  out.adversarial = kind == AdvLoss::least_squares ? mean(square(add_scalar(d_fake, T(-1))))
                                                   : mean(softplus(scale(d_fake, T(-1))));
  out.l1 = mean(abs(sub(g_out, target)));
  out.total = lambda_l1 == 0.0 ? out.adversarial : add(out.adversarial, scale(out.l1, T(lambda_l1)));
  return out;
}

template <typename T>
GanLosses<T> gan_losses(const Tensor<T>& d_real, const Tensor<T>& d_fake, const Tensor<T>& g_out,
                        const Tensor<T>& target, double lambda_l1, AdvLoss kind) {
  return {discriminator_loss(d_real, d_fake, kind), generator_loss(d_fake, g_out, target, lambda_l1, kind).total};
}

void write_train_log(const std::vector<StepRecord>& log, const fs::path& file) {
  std::ofstream os(file);
  if (!os) throw IoError("cannot write " + file.string());
  os << "#step\tloss_D\tloss_G\tl1\n";
  char buf[160];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%lld\t%.9g\t%.9g\t%.9g\n", static_cast<long long>(r.step), r.loss_d, r.loss_g,
                  r.l1);
    os << buf;
  }
  if (!os) throw IoError("failed writing " + file.string());
}

TrainResult train(const Manifest& manifest, const PfanConfig& model, const TrainConfig& cfg) {
  model.validate();
  cfg.validate(model);
  const std::vector<Pair> pairs = load_train_pairs(manifest, cfg.crop);

  TrainResult result{Generator<float>(model, derive_seed(cfg.seed, "generator")),
                     PatchDiscriminator<float>(model, derive_seed(cfg.seed, "discriminator")),
                     {},
                     {}};
  const Generator<float>& gen = result.generator;
  const PatchDiscriminator<float>& disc = result.discriminator;
  AdamState<float> g_state, d_state;
  std::mt19937_64 rng(derive_seed(cfg.seed, "data"));

  const bool writing = !cfg.out_dir.empty();
  if (writing) {
    try {
      fs::create_directories(cfg.out_dir / "checkpoints");
    } catch (const fs::filesystem_error& e) {
      throw IoError("cannot create " + cfg.out_dir.string() + ": " + e.what());
    }
  }

  const Index n = Index(pairs.size());
  // Batches are drawn from a stream of shuffled epochs, so every batch holds
  // exactly cfg.batch pairs; an epoch is n pairs' worth of steps.
  const Index batches_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const Index warmup_steps = cfg.d_warmup_epochs * batches_per_epoch;
  Index gan_budget = cfg.epochs * batches_per_epoch;
  if (cfg.max_steps > 0) gan_budget = std::min(gan_budget, cfg.max_steps);
  const Index total_steps = warmup_steps + gan_budget;

  std::vector<Index> order(static_cast<std::size_t>(n));
  Index cursor = n;
  for (Index step = 0; step < total_steps; ++step) {
    const bool warmup = step < warmup_steps;
    std::vector<Sample> batch;
    for (Index b = 0; b < cfg.batch; ++b) {
      if (cursor == n) {
        std::iota(order.begin(), order.end(), Index(0));
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(cropped(pairs[std::size_t(order[std::size_t(cursor++)])], cfg.crop, rng));
    }
    const float weight = 1.0f / float(batch.size());

    StepRecord rec;
    rec.step = step;
    rec.warmup = warmup;

    // D step: generator output is computed without a graph.
    disc.params().set_requires_grad(true);
    disc.params().zero_grad();
    rec.g_before_d = gen.params().checksum();
    for (const auto& s : batch) {
      Tensor<float> fake;
      {
        NoGradGuard no_grad;
        fake = gen.forward(s.syn);
      }
      const Tensor<float> d_real = disc.forward(s.syn, s.clean);
      const Tensor<float> d_fake = disc.forward(s.syn, fake);
      const Tensor<float> loss = discriminator_loss(d_real, d_fake, cfg.adv_loss);
      rec.loss_d += double(loss.item()) * weight;
      scale(loss, weight).backward();
      if (warmup) {
        NoGradGuard no_grad;
        const auto gl = generator_loss(d_fake.detach(), fake, s.clean, cfg.lambda_l1, cfg.adv_loss);
        rec.loss_g += double(gl.total.item()) * weight;
        rec.l1 += double(gl.l1.item()) * weight;
      }
    }
    adam_step(disc.params(), d_state, cfg);
    disc.params().zero_grad();
    rec.g_after_d = gen.params().checksum();

    rec.d_before_g = disc.params().checksum();
    if (!warmup) {
      // G step: D is frozen, so no gradient reaches its parameters.
      disc.params().set_requires_grad(false);
      gen.params().zero_grad();
      for (const auto& s : batch) {
        const Tensor<float> fake = gen.forward(s.syn);
        const auto gl = generator_loss(disc.forward(s.syn, fake), fake, s.clean, cfg.lambda_l1, cfg.adv_loss);
        rec.loss_g += double(gl.total.item()) * weight;
        rec.l1 += double(gl.l1.item()) * weight;
        scale(gl.total, weight).backward();
      }
      adam_step(gen.params(), g_state, cfg);
      gen.params().zero_grad();
      disc.params().set_requires_grad(true);
    }
    rec.d_after_g = disc.params().checksum();
    result.log.push_back(rec);

    const Index gan_step = step - warmup_steps + 1;
    if (writing && !warmup && cfg.checkpoint_every > 0 && gan_step % cfg.checkpoint_every == 0) {
      const fs::path g_file = cfg.out_dir / "checkpoints" / step_name("generator", gan_step);
      save_weights(gen.params(), g_file);
      save_weights(disc.params(), cfg.out_dir / "checkpoints" / step_name("discriminator", gan_step));
      result.checkpoints.push_back(g_file);
    }
  }

  if (writing) {
    save_weights(gen.params(), cfg.out_dir / "generator.pfw");
    save_weights(disc.params(), cfg.out_dir / "discriminator.pfw");
    result.checkpoints.push_back(cfg.out_dir / "generator.pfw");
    write_train_log(result.log, cfg.out_dir / "train_log.tsv");
  }
  return result;
}

#define PFAN_INSTANTIATE_TRAIN(T)                                                                              \
  template void adam_step(const ParamStore<T>&, AdamState<T>&, const TrainConfig&);                            \
  template Tensor<T> discriminator_loss(const Tensor<T>&, const Tensor<T>&, AdvLoss);                          \
  template GeneratorLoss<T> generator_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double,       \
                                           AdvLoss);                                                           \
  template GanLosses<T> gan_losses(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                   double, AdvLoss);

PFAN_INSTANTIATE_TRAIN(float)
PFAN_INSTANTIATE_TRAIN(double)

#undef PFAN_INSTANTIATE_TRAIN

}  // namespace pfan
