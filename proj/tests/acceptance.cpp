// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "delta_e_vectors.hpp"
#include "oracles.hpp"
#include "pfan/arch.hpp"
#include "pfan/attention_kernels.hpp"
#include "pfan/bench.hpp"
#include "pfan/dataset.hpp"
#include "pfan/evaluate.hpp"
#include "pfan/metrics.hpp"
#include "pfan/smoke.hpp"
#include "pfan/train.hpp"
#include "support.hpp"

using namespace pfan;
using test::randn;
using Td = Tensor<double>;

namespace {

struct Outcome {
  bool pass = true;
  std::string first_failure;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok && pass) first_failure = what;
    pass = pass && ok;
  }
};

using Criterion = std::function<void(Outcome&)>;

double rel_to_ref(const Td& got, const Td& ref) {
  return test::max_abs_diff(got, ref) / std::max(ref.data().abs().maxCoeff(), 1e-300);
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

PfanConfig tiny(Index c) {
  PfanConfig cfg = PfanConfig::desk();
  cfg.base_channels = c;
  cfg.mbi_groups = c;
  return cfg;
}

Image noisy(const Image& base, double amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Image out = base;
  for (int c = 0; c < 3; ++c)
    for (Index y = 0; y < base.height(); ++y)
      for (Index x = 0; x < base.width(); ++x)
        out(c, y, x) = float(std::clamp(base(c, y, x) + amplitude * n(rng), 0.0, 1.0));
  return out;
}

void sea_oracle(Outcome& o) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<Index> side(1, 16), ch(2, 8);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const Index c = ch(rng), h = side(rng), w = side(rng);
    const Index qk = std::uniform_int_distribution<Index>(1, c)(rng), v = std::uniform_int_distribution<Index>(1, c)(rng);
    ParamStore<double> s;
    const auto p = make_sea(s, "sea", c, qk, v, std::uint64_t(i));
    test::randomize(s, 1000 + std::uint64_t(i), 0.5);
    const Td x = randn<double>({c, h, w}, 2000 + std::uint64_t(i));
    worst = std::max(worst, rel_to_ref(sea_attention(x, p), oracle::sea(x, p)));
  }
  o.expect(worst < 1e-5, "relative error " + sci(worst));
  o.detail << "50 instances, max rel " << sci(worst);
}

void gradient_suite(Outcome& o) {
  const PfanConfig cfg = tiny(4);
  double worst = 0.0;
  std::string worst_at;
  Index checked = 0;
  const auto run = [&](const std::string& block, std::vector<std::pair<std::string, Td>> in,
                       const std::function<Td()>& f, std::uint64_t seed, Index per_tensor = 6) {
    const auto r = test::gradcheck(in, f, seed, per_tensor);
    checked += r.checked;
    o.expect(r.checked > 0, block + ": nothing checked");
    if (r.max_rel >= worst) {
      worst = r.max_rel;
      worst_at = block + " " + r.worst;
    }
  };
  const auto with_input = [](const ParamStore<double>& s, const Td& x) {
    auto in = test::named_params(s);
    in.emplace_back("x", x);
    return in;
  };
  {
    ParamStore<double> s;
    const auto p = make_mbi(s, "mbi", cfg, 1);
    test::randomize(s, 2);
    const Td x = randn<double>({4, 6, 6}, 3);
    run("mbi", with_input(s, x), [&] { return mbi_block(x, p); }, 4);
  }
  {
    ParamStore<double> s;
    const auto p = make_sea(s, "sea", 4, 2, 2, 1);
    test::randomize(s, 2, 0.5);
    const Td x = randn<double>({4, 6, 5}, 3);
    run("sea", with_input(s, x), [&] { return sea_attention(x, p); }, 4);
  }
  {
    ParamStore<double> s;
    const auto p = make_leff(s, "leff", 4, 2, 1);
    test::randomize(s, 2);
    const Td x = randn<double>({16, 4}, 3);
    run("leff", with_input(s, x), [&] { return leff(x, p, 4, 4); }, 4);
  }
  {
    ParamStore<double> s;
    auto p = make_lat(s, "lat", cfg, 1);
    p.window = 4;
    test::randomize(s, 2);
    const Td x = randn<double>({4, 8, 8}, 3);
    run("lat", with_input(s, x), [&] { return lat_block(x, p); }, 4);
  }
  {
    ParamStore<double> s;
    const auto p = make_leff(s, "fusion", 4, 2, 1);
    test::randomize(s, 2);
    const Td x = randn<double>({4, 5, 5}, 3);
    run("fusion", with_input(s, x), [&] { return fusion_channel_attention(x, p); }, 4);
  }
  {
    const Generator<double> g(cfg, 1);
    test::randomize(g.params(), 2);
    const Td x = test::randu<double>({3, 8, 8}, 3);
    run("generator", with_input(g.params(), x), [&] { return g.forward(x); }, 4, 3);
  }
  {
    const PatchDiscriminator<double> d(cfg, 1);
    test::randomize(d.params(), 2);
    const Td x = randn<double>({6, 8, 8}, 3);
    run("patchgan", with_input(d.params(), x), [&] { return d.forward(x); }, 4);
  }
  o.expect(worst < 1e-4, "max rel " + sci(worst) + " at " + worst_at);
  o.detail << "7 blocks, " << checked << " entries, max rel " << sci(worst);
}

void residual_identity(Outcome& o) {
  float worst = 0.0f;
  for (Index side : {8, 13, 16}) {
    ParamStore<float> s;
    const auto p = make_lat(s, "lat", tiny(8), 1);
    test::randomize(s, 2, 0.5);
    p.sea.w_v.mutable_data().setZero();
    for (const auto& [name, t] : s)
      if (name.rfind("lat.leff.", 0) == 0) t.mutable_data().setZero();
    const Tensor<float> x = randn<float>({8, side, side}, 3);
    const Tensor<float> y = lat_block(x, p);
    o.expect(y.shape() == x.shape(), "shape changed");
    worst = std::max(worst, (y.data() - x.data()).abs().maxCoeff());
  }
  o.expect(worst < 1e-7f, "max deviation " + sci(worst));
  o.detail << "sides 8, 13, 16, max |y-x| " << sci(worst);
}

void grouped_conv(Outcome& o) {
  for (Index k : {3, 7, 11}) {
    const Index grouped = shape_numel(LayerSpec::conv(64, 64, k, 64).weight_shape());
    const Index dense = shape_numel(LayerSpec::conv(64, 64, k, 1).weight_shape());
    o.expect(grouped * 64 == dense, "k=" + std::to_string(k) + ": " + std::to_string(grouped) + " vs " +
                                        std::to_string(dense));
    if (k == 3) o.detail << "k=3: " << grouped << " vs " << dense << " weights";
  }
  o.detail << ", also k=7 and k=11";
}

void complexity(Outcome& o) {
  const auto recs = run_attention_bench({{8, 8}, {16, 16}, {32, 32}, {64, 64}}, 16, 5, 1);
  for (const auto& r : recs)
    o.expect(r.measured_multiplies == r.analytic_flops,
             "counts differ at " + std::to_string(r.height) + "x" + std::to_string(r.width));
  for (Index n : {1, 5, 12})
    for (auto kind : {AttentionKind::sea, AttentionKind::full}) {
      const Td q = randn<double>({3, n, n + 2}, 1), k = randn<double>({3, n, n + 2}, 2),
               v = randn<double>({5, n, n + 2}, 3);
      std::int64_t m = 0;
      const std::span<const double> qs(q.data().data(), std::size_t(q.size())),
          ks(k.data().data(), std::size_t(k.size())), vs(v.data().data(), std::size_t(v.size()));
      if (kind == AttentionKind::sea)
        sea_attention_kernel(qs, ks, vs, 3, 5, n, n + 2, &m);
      else
        full_attention_kernel(qs, ks, vs, 3, 5, n, n + 2, &m);
      o.expect(m == flop_count(kind, 8, 3, 5, n, n + 2), "non-square count differs");
    }
  const auto s = attention_scaling({8, 16, 32, 64}, 16);
  o.expect(std::abs(s.full_slope - 4.0) <= 0.1, "full slope " + std::to_string(s.full_slope));
  o.expect(s.sea_slope <= 3.1, "sea slope " + std::to_string(s.sea_slope));
  o.expect(s.ratio_strictly_decreasing, "ratio not strictly decreasing");
  o.detail << "slopes full " << std::to_string(s.full_slope).substr(0, 5) << " sea "
           << std::to_string(s.sea_slope).substr(0, 5) << ", ratio " << sci(s.ratio.front()) << " -> "
           << sci(s.ratio.back());
}

void ciede(Outcome& o) {
  double worst = 0.0;
  for (const auto& v : test::kDeltaE2000Vectors) {
    const LabColor x{v.l1, v.a1, v.b1}, y{v.l2, v.a2, v.b2};
    worst = std::max({worst, std::abs(ciede2000(x, y) - v.expected), std::abs(ciede2000(y, x) - v.expected)});
  }
  o.expect(worst <= 1e-4, "vector error " + sci(worst));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> l(0.0, 100.0), ab(-128.0, 128.0);
  int broken = 0;
  for (int i = 0; i < 10000; ++i) {
    const LabColor x{l(rng), ab(rng), ab(rng)}, y{l(rng), ab(rng), ab(rng)};
    const double d = ciede2000(x, y);
    if (!(d == ciede2000(y, x) && d >= 0.0 && ciede2000(x, x) == 0.0 && std::isfinite(d))) ++broken;
  }
  o.expect(broken == 0, std::to_string(broken) + " random pairs break symmetry or identity");
  o.detail << test::kDeltaE2000Vectors.size() << " vectors, max err " << sci(worst) << ", 10000 random pairs";
}

void metric_sanity(Outcome& o) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Image a = test::procedural_scene(20, 24, s);
    o.expect(ssim(a, a) == 1.0, "ssim(x,x) != 1");
  }
  // 16 of 25 pixels differ by 1/8 on every channel: MSE = 0.01.
  Image p(5, 5, 0.5f), q(5, 5, 0.5f);
  for (int c = 0; c < 3; ++c)
    for (Index i = 0; i < 16; ++i) q(c, i / 5, i % 5) = 0.625f;
  o.expect(psnr(p, q) == 20.0, "psnr example gives " + std::to_string(psnr(p, q)));
  int monotone = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Image img = test::procedural_scene(24, 24, 100 + s);
    double last = kPsnrInf;
    bool ok = true;
    for (double amp : {0.01, 0.02, 0.04, 0.08, 0.16}) {
      const double v = psnr(img, noisy(img, amp, 7 + s));
      ok = ok && v < last;
      last = v;
    }
    monotone += ok;
  }
  o.expect(monotone == 20, std::to_string(monotone) + "/20 images monotone");
  o.detail << "ssim(x,x)=1, psnr(MSE 0.01)=" << psnr(p, q) << " dB, " << monotone << "/20 monotone";
}

void parameter_budget(Outcome& o) {
  const Index a = count_params(Generator<float>(PfanConfig{}, 1).params());
  const Index b = count_params(Generator<float>(PfanConfig{}, 77).params());
  o.expect(a == b, "count depends on the seed");
  o.expect(a < 1000000, "count " + std::to_string(a));
  o.detail << a << " parameters";
}

void desk_overfit(Outcome& o) {
  test::TempDir dir("accept");
  test::write_scenes(dir / "clean", 11, 32, 5);
  const Manifest m = generate_dataset({dir / "clean", dir / "data", 11, 7, DensityTier::heavy});
  const Index n_train = Index(m.rows_in("train").size());
  o.expect(n_train == 8, std::to_string(n_train) + " train pairs");

  PfanConfig model = PfanConfig::desk();
  model.lat_window = 32;  // one attention window over the whole crop
  TrainConfig cfg = TrainConfig::desk();
  cfg.epochs = 1000;
  cfg.max_steps = 500;
  cfg.seed = 1;
  o.expect(cfg.lr == 2e-4 && cfg.beta1 == 0.5 && cfg.beta2 == 0.999 && cfg.crop == 32, "optimizer settings");

  const MetricsReport before = evaluate_dataset([](const Image& x) { return x; }, m, "train");
  const TrainResult r = train(m, model, cfg);
  const MetricsReport after = evaluate_dataset(r.generator, m, "train");

  Index gan_steps = 0;
  bool finite = true, frozen = true;
  for (const auto& s : r.log) {
    gan_steps += !s.warmup;
    finite = finite && std::isfinite(s.loss_d) && std::isfinite(s.loss_g) && std::isfinite(s.l1);
    frozen = frozen && s.d_before_g == s.d_after_g && s.g_before_d == s.g_after_d;
  }
  const double gain = after.mean_psnr - before.mean_psnr;
  o.expect(gan_steps <= 500, std::to_string(gan_steps) + " GAN steps");
  o.expect(finite, "non-finite loss");
  o.expect(frozen, "frozen network changed");
  o.expect(gain >= 3.0, "gain " + std::to_string(gain) + " dB");
  char buf[128];
  std::snprintf(buf, sizeof buf, "train PSNR %.2f -> %.2f dB (+%.2f), %lld GAN steps", before.mean_psnr,
                after.mean_psnr, gain, static_cast<long long>(gan_steps));
  o.detail << buf;
}

void synthesis_contract(Outcome& o) {
  const Image clean = test::procedural_scene(24, 20, 1);
  SmokeParams none;
  none.density = 0.0;
  o.expect(composite(clean, render_smoke_frame(none, 24, 20)) == clean, "S_d = 0 is not the identity");
  o.expect(composite(clean, SmokeLayer::Zero(24, 20)) == clean, "zero layer is not the identity");

  Index rerendered = 0;
  {
    test::TempDir dir("accept");
    test::write_scenes(dir / "clean", 11, 24, 3);
    const Manifest m = generate_dataset({dir / "clean", dir / "data", 22, 4, DensityTier::random});
    for (const auto& r : m.rows) {
      o.expect(rerender_syn(m, r) == read_png(m.resolve(r.syn)), "re-render differs for " + r.syn);
      ++rerendered;
    }
  }

  for (Index n = 1; n <= 300; ++n) {
    const SplitCounts c = split_counts(n);
    o.expect(c.train + c.val + c.test == n && c.train >= 1 && c.val >= 0 && c.test >= 0,
             "split counts for n=" + std::to_string(n));
  }
  Index sizes = 0;
  for (Index n : {3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 17, 23, 40}) {
    test::TempDir dir("accept");
    test::write_scenes(dir / "clean", n, 8, std::uint64_t(n));
    const Manifest m = generate_dataset({dir / "clean", dir / "data", 2 * n + 1, std::uint64_t(n), DensityTier::light});
    std::map<std::string, std::set<std::string>> split_of;
    for (const auto& r : m.rows) split_of[r.source].insert(r.split);
    std::map<std::string, Index> per;
    bool disjoint = Index(split_of.size()) == n;
    for (const auto& [source, splits] : split_of) {
      disjoint = disjoint && splits.size() == 1;
      ++per[*splits.begin()];
    }
    const SplitCounts c = split_counts(n);
    o.expect(disjoint, "splits share a source at n=" + std::to_string(n));
    o.expect(per["train"] == c.train && per["val"] == c.val && per["test"] == c.test,
             "split sizes at n=" + std::to_string(n));
    ++sizes;
  }
  o.detail << rerendered << " pairs re-rendered bit-exact, disjoint splits for " << sizes << " source counts";
}

struct Entry {
  int id;
  const char* name;
  double limit_s;  // 0: no runtime bound
  Criterion run;
};

}  // namespace

int main() {
  const std::vector<Entry> entries{
      {1, "sea oracle equivalence", 10.0, sea_oracle},
      {2, "gradient suite", 120.0, gradient_suite},
      {3, "residual identity", 0.0, residual_identity},
      {4, "grouped conv 1/64", 0.0, grouped_conv},
      {5, "complexity", 60.0, complexity},
      {6, "ciede2000 conformance", 5.0, ciede},
      {7, "metric sanity", 0.0, metric_sanity},
      {8, "parameter budget", 0.0, parameter_budget},
      {9, "desk overfit", 300.0, desk_overfit},
      {10, "synthesis contract", 0.0, synthesis_contract},
  };
  int failed = 0;
  for (const auto& e : entries) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      e.run(o);
    } catch (const std::exception& ex) {
      o.expect(false, std::string("exception: ") + ex.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (e.limit_s > 0.0) o.expect(secs < e.limit_s, "runtime over " + std::to_string(int(e.limit_s)) + " s");
    failed += !o.pass;
    std::printf("%s %2d %-24s %6.1fs  %s%s\n", o.pass ? "PASS" : "FAIL", e.id, e.name, secs, o.detail.str().c_str(),
                o.pass ? "" : ("  [" + o.first_failure + "]").c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", int(entries.size()) - failed, entries.size());
  return failed ? 1 : 0;
}
