#include "pfan/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include <json.hpp>

#include "pfan/attention_kernels.hpp"
#include "pfan/error.hpp"

namespace pfan {
namespace {

const char* kind_name(AttentionKind k) { return k == AttentionKind::sea ? "sea" : "full"; }

std::vector<double> random_buffer(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace

std::string BenchRecord::to_json() const {
  nlohmann::json j{{"kind", kind_name(kind)},         {"H", height},
                   {"W", width},                      {"C", channels},
                   {"reps", reps},                    {"median_ms", median_ms},
                   {"min_ms", min_ms},                {"max_ms", max_ms},
                   {"analytic_flops", analytic_flops}, {"measured_multiplies", measured_multiplies}};
  return j.dump();
}

std::vector<BenchRecord> run_attention_bench(const std::vector<std::pair<Index, Index>>& sizes, Index channels,
                                             Index reps, std::uint64_t seed) {
  if (sizes.empty()) throw ValueError("bench: no sizes given");
  if (reps < 5) throw ValueError("bench: reps must be >= 5");
  if (channels < 2) throw ValueError("bench: channels must be >= 2");
  const Index qk = std::max<Index>(1, channels / 2), cv = qk;
  for (const auto& [h, w] : sizes) {
    if (h < 1 || w < 1) throw ValueError("bench: extents must be positive");
    if (h * w > kFullAttentionTokenCap) {
      throw ResourceError("bench: full attention at " + std::to_string(h) + "x" + std::to_string(w) +
                          " exceeds the cap of " + std::to_string(kFullAttentionTokenCap) + " tokens");
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<BenchRecord> out;
  for (const auto& [h, w] : sizes) {
    const auto n = std::size_t(h * w);
    const auto q = random_buffer(std::size_t(qk) * n, rng);
    const auto k = random_buffer(std::size_t(qk) * n, rng);
    const auto v = random_buffer(std::size_t(cv) * n, rng);
    for (AttentionKind kind : {AttentionKind::sea, AttentionKind::full}) {
      auto run = [&](std::int64_t* counter) {
        return kind == AttentionKind::sea ? sea_attention_kernel(q, k, v, qk, cv, h, w, counter)
                                          : full_attention_kernel(q, k, v, qk, cv, h, w, counter);
      };
      std::vector<double> ms;
      for (Index r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto y = run(nullptr);
        const auto t1 = std::chrono::steady_clock::now();
        if (!std::isfinite(y.front())) throw ValueError("bench: non-finite attention output");
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
      std::sort(ms.begin(), ms.end());
      BenchRecord rec;
      rec.kind = kind;
      rec.height = h;
      rec.width = w;
      rec.channels = channels;
      rec.reps = reps;
      rec.median_ms = ms.size() % 2 ? ms[ms.size() / 2] : 0.5 * (ms[ms.size() / 2 - 1] + ms[ms.size() / 2]);
      rec.min_ms = ms.front();
      rec.max_ms = ms.back();
      rec.analytic_flops = flop_count(kind, channels, qk, cv, h, w);
      run(&rec.measured_multiplies);
      out.push_back(rec);
    }
  }
  return out;
}

std::string bench_table(const std::vector<BenchRecord>& records) {
  std::ostringstream os;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-5s %5s %5s %4s %12s %16s %16s\n", "kind", "H", "W", "C", "median_ms",
                "analytic_flops", "measured");
  os << buf;
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%-5s %5lld %5lld %4lld %12.4f %16lld %16lld\n", kind_name(r.kind),
                  static_cast<long long>(r.height), static_cast<long long>(r.width),
                  static_cast<long long>(r.channels), r.median_ms, static_cast<long long>(r.analytic_flops),
                  static_cast<long long>(r.measured_multiplies));
    os << buf;
  }
  return os.str();
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ValueError("loglog_slope: need at least two paired points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) throw ValueError("loglog_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= double(x.size());
  my /= double(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

ScalingSummary attention_scaling(const std::vector<Index>& sides, Index channels) {
  ScalingSummary s;
  s.sides = sides;
  const Index qk = std::max<Index>(1, channels / 2), cv = qk;
  std::vector<double> xs;
  for (Index n : sides) {
    s.full_flops.push_back(double(flop_count(AttentionKind::full, channels, qk, cv, n, n)));
    s.sea_flops.push_back(double(flop_count(AttentionKind::sea, channels, qk, cv, n, n)));
    s.ratio.push_back(s.sea_flops.back() / s.full_flops.back());
    xs.push_back(double(n));
  }
  s.full_slope = loglog_slope(xs, s.full_flops);
  s.sea_slope = loglog_slope(xs, s.sea_flops);
  s.ratio_strictly_decreasing = true;
  for (std::size_t i = 1; i < s.ratio.size(); ++i)
    if (!(s.ratio[i] < s.ratio[i - 1])) s.ratio_strictly_decreasing = false;
  return s;
}

}  // namespace pfan
