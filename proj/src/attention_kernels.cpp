#include "pfan/attention_kernels.hpp"

#include <algorithm>
#include <cmath>

namespace pfan {
namespace {

template <bool Counting>
struct Tally {
  std::int64_t n = 0;
  double mul(double a, double b) {
    if constexpr (Counting) ++n;
    return a * b;
  }
  double div(double a, double b) {
    if constexpr (Counting) ++n;
    return a / b;
  }
};

void check_sizes(std::span<const double> q, std::span<const double> k, std::span<const double> v, Index qk, Index cv,
                 Index h, Index w) {
  const auto hw = std::size_t(h * w);
  if (qk < 1 || cv < 1 || h < 1 || w < 1 || q.size() != std::size_t(qk) * hw || k.size() != std::size_t(qk) * hw ||
      v.size() != std::size_t(cv) * hw) {
    throw ShapeError("attention kernel: buffer sizes do not match the declared extents");
  }
}

// Softmax attention of `n_query` query vectors over `n_key` key/value vectors,
// each stored as [n × C] rows. Normalization is applied once per output
// channel after accumulating with unnormalized weights.
template <bool Counting>
void attend(const std::vector<double>& queries, const std::vector<double>& keys, const std::vector<double>& values,
            Index n_query, Index n_key, Index qk, Index cv, std::vector<double>& out, Tally<Counting>& tally) {
  std::vector<double> logits(static_cast<std::size_t>(n_key));
  out.assign(std::size_t(n_query * cv), 0.0);
  for (Index i = 0; i < n_query; ++i) {
    const double* qi = queries.data() + i * qk;
    for (Index p = 0; p < n_key; ++p) {
      const double* kp = keys.data() + p * qk;
      double s = 0.0;
      for (Index c = 0; c < qk; ++c) s += tally.mul(qi[c], kp[c]);
      logits[std::size_t(p)] = s;
    }
    const double peak = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    double* oi = out.data() + i * cv;
    for (Index p = 0; p < n_key; ++p) {
      const double e = std::exp(logits[std::size_t(p)] - peak);
      total += e;
      const double* vp = values.data() + p * cv;
      for (Index c = 0; c < cv; ++c) oi[c] += tally.mul(e, vp[c]);
    }
    for (Index c = 0; c < cv; ++c) oi[c] = tally.div(oi[c], total);
  }
}

// Squeezed sequences: rows → [H × C] (mean over W), cols → [W × C] (mean over H).
template <bool Counting>
void squeeze(std::span<const double> x, Index channels, Index h, Index w, std::vector<double>& rows,
             std::vector<double>& cols, Tally<Counting>& tally) {
  rows.assign(std::size_t(h * channels), 0.0);
  cols.assign(std::size_t(w * channels), 0.0);
  for (Index c = 0; c < channels; ++c) {
    const double* plane = x.data() + c * h * w;
    for (Index i = 0; i < h; ++i) {
      double s = 0.0;
      for (Index j = 0; j < w; ++j) s += plane[i * w + j];
      rows[std::size_t(i * channels + c)] = tally.div(s, double(w));
    }
    for (Index j = 0; j < w; ++j) {
      double s = 0.0;
      for (Index i = 0; i < h; ++i) s += plane[i * w + j];
      cols[std::size_t(j * channels + c)] = tally.div(s, double(h));
    }
  }
}

template <bool Counting>
std::vector<double> sea_impl(std::span<const double> q, std::span<const double> k, std::span<const double> v, Index qk,
                             Index cv, Index h, Index w, Tally<Counting>& tally) {
  std::vector<double> qh, qv, kh, kv, vh, vv;
  squeeze(q, qk, h, w, qh, qv, tally);
  squeeze(k, qk, h, w, kh, kv, tally);
  squeeze(v, cv, h, w, vh, vv, tally);
  std::vector<double> row_out, col_out;
  attend(qh, kh, vh, h, h, qk, cv, row_out, tally);
  attend(qv, kv, vv, w, w, qk, cv, col_out, tally);
  std::vector<double> out(std::size_t(cv * h * w));
  for (Index c = 0; c < cv; ++c)
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j)
        out[std::size_t((c * h + i) * w + j)] = row_out[std::size_t(i * cv + c)] + col_out[std::size_t(j * cv + c)];
  return out;
}

// [C×HW] channel-major → [HW×C] token-major.
std::vector<double> tokens_of(std::span<const double> x, Index channels, Index n) {
  std::vector<double> t(std::size_t(channels * n));
  for (Index c = 0; c < channels; ++c)
    for (Index p = 0; p < n; ++p) t[std::size_t(p * channels + c)] = x[std::size_t(c * n + p)];
  return t;
}

template <bool Counting>
std::vector<double> full_impl(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                              Index qk, Index cv, Index h, Index w, Tally<Counting>& tally) {
  const Index n = h * w;
  std::vector<double> token_out;
  attend(tokens_of(q, qk, n), tokens_of(k, qk, n), tokens_of(v, cv, n), n, n, qk, cv, token_out, tally);
  std::vector<double> out(std::size_t(cv * n));
  for (Index c = 0; c < cv; ++c)
    for (Index p = 0; p < n; ++p) out[std::size_t(c * n + p)] = token_out[std::size_t(p * cv + c)];
  return out;
}

}  // namespace

std::vector<double> sea_attention_kernel(std::span<const double> q, std::span<const double> k,
                                         std::span<const double> v, Index qk, Index cv, Index height, Index width,
                                         std::int64_t* multiplies) {
  check_sizes(q, k, v, qk, cv, height, width);
  if (multiplies) {
    Tally<true> tally;
    auto out = sea_impl(q, k, v, qk, cv, height, width, tally);
    *multiplies += tally.n;
    return out;
  }
  Tally<false> tally;
  return sea_impl(q, k, v, qk, cv, height, width, tally);
}

std::vector<double> full_attention_kernel(std::span<const double> q, std::span<const double> k,
                                          std::span<const double> v, Index qk, Index cv, Index height, Index width,
                                          std::int64_t* multiplies) {
  check_sizes(q, k, v, qk, cv, height, width);
  if (multiplies) {
    Tally<true> tally;
    auto out = full_impl(q, k, v, qk, cv, height, width, tally);
    *multiplies += tally.n;
    return out;
  }
  Tally<false> tally;
  return full_impl(q, k, v, qk, cv, height, width, tally);
}

}  // namespace pfan
