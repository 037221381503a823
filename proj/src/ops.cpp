#include "pfan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pfan {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

Index normalize_axis(Index axis, Index dims, const char* op) {
  const Index a = axis < 0 ? axis + dims : axis;
  if (a < 0 || a >= dims) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     std::to_string(dims) + "-d tensor");
  }
  return a;
}

void require_dims(const Shape& s, std::size_t dims, const char* op) {
  if (s.size() != dims) {
    throw ShapeError(std::string(op) + ": expected " + std::to_string(dims) + "-d tensor, got " + shape_str(s));
  }
}

// Strides of each operand expressed on the output index space; broadcast
// dimensions get stride 0.
struct BroadcastPlan {
  Shape out;
  std::vector<Index> stride_a;
  std::vector<Index> stride_b;
};

std::vector<Index> aligned_strides(const Shape& in, const Shape& out) {
  const std::size_t nd = out.size();
  std::vector<Index> strides(nd, 0);
  Index stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t din = in.size() - 1 - k;
    const std::size_t dout = nd - 1 - k;
    strides[dout] = in[din] == 1 ? 0 : stride;
    stride *= in[din];
  }
  return strides;
}

BroadcastPlan make_plan(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  plan.out = broadcast_shape(a, b);
  plan.stride_a = aligned_strides(a, plan.out);
  plan.stride_b = aligned_strides(b, plan.out);
  return plan;
}

template <class F>
void for_each_broadcast(const BroadcastPlan& plan, F&& f) {
  const std::size_t nd = plan.out.size();
  const Index total = shape_numel(plan.out);
  std::vector<Index> counter(nd, 0);
  Index ia = 0, ib = 0;
  for (Index o = 0; o < total; ++o) {
    f(o, ia, ib);
    for (std::size_t d = nd; d-- > 0;) {
      ia += plan.stride_a[d];
      ib += plan.stride_b[d];
      if (++counter[d] < plan.out[d]) break;
      ia -= plan.stride_a[d] * plan.out[d];
      ib -= plan.stride_b[d] * plan.out[d];
      counter[d] = 0;
    }
  }
}

// Generic broadcasting binary op. `da`/`db` return the local partials given
// (a_value, b_value).
template <typename T, class Fwd, class DA, class DB>
Tensor<T> binary_op(const char* name, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, DA da, DB db) {
  using Array = typename Tensor<T>::Array;
  if (a.shape() == b.shape()) {
    Array out(a.size());
    const Array& x = a.data();
    const Array& y = b.data();
    for (Index i = 0; i < out.size(); ++i) out[i] = fwd(x[i], y[i]);
    return Tensor<T>::make_result(a.shape(), std::move(out), name, {&a, &b},
                                  [a, b, da, db](const Array& g, std::span<Array* const> gin) {
                                    const Array& x = a.data();
                                    const Array& y = b.data();
                                    if (gin[0])
                                      for (Index i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * da(x[i], y[i]);
                                    if (gin[1])
                                      for (Index i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * db(x[i], y[i]);
                                  });
  }
  BroadcastPlan plan = make_plan(a.shape(), b.shape());
  Array out(shape_numel(plan.out));
  {
    const Array& x = a.data();
    const Array& y = b.data();
    for_each_broadcast(plan, [&](Index o, Index ia, Index ib) { out[o] = fwd(x[ia], y[ib]); });
  }
  Shape out_shape = plan.out;
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), name, {&a, &b},
                                [a, b, plan, da, db](const Array& g, std::span<Array* const> gin) {
                                  const Array& x = a.data();
                                  const Array& y = b.data();
                                  for_each_broadcast(plan, [&](Index o, Index ia, Index ib) {
                                    if (gin[0]) (*gin[0])[ia] += g[o] * da(x[ia], y[ib]);
                                    if (gin[1]) (*gin[1])[ib] += g[o] * db(x[ia], y[ib]);
                                  });
                                });
}

template <typename T, class Fwd, class Deriv>
Tensor<T> unary_op(const char* name, const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  using Array = typename Tensor<T>::Array;
  Array out(x.size());
  const Array& v = x.data();
  for (Index i = 0; i < out.size(); ++i) out[i] = fwd(v[i]);
  return Tensor<T>::make_result(x.shape(), std::move(out), name, {&x},
                                [x, deriv](const Array& g, std::span<Array* const> gin) {
                                  const Array& v = x.data();
                                  for (Index i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * deriv(v[i]);
                                });
}

struct AxisSplit {
  Index outer;
  Index n;
  Index inner;
};

AxisSplit split_at(const Shape& s, Index axis) {
  AxisSplit r{1, s[std::size_t(axis)], 1};
  for (Index d = 0; d < axis; ++d) r.outer *= s[std::size_t(d)];
  for (std::size_t d = std::size_t(axis) + 1; d < s.size(); ++d) r.inner *= s[d];
  return r;
}

// Gathers the receptive-field columns of one group: rows are
// (channel, ky, kx), columns are output positions.
template <typename T>
void im2col(const T* x, Index channels, Index height, Index width, Index k, Index stride, Index pad,
            Index out_h, Index out_w, T* cols) {
  const Index positions = out_h * out_w;
  for (Index c = 0; c < channels; ++c) {
    const T* plane = x + c * height * width;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        T* row = cols + ((c * k + ky) * k + kx) * positions;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= height) {
            std::fill(row + oy * out_w, row + (oy + 1) * out_w, T(0));
            continue;
          }
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox * stride + kx - pad;
            row[oy * out_w + ox] = (ix < 0 || ix >= width) ? T(0) : plane[iy * width + ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, Index channels, Index height, Index width, Index k, Index stride, Index pad,
                Index out_h, Index out_w, T* dx) {
  const Index positions = out_h * out_w;
  for (Index c = 0; c < channels; ++c) {
    T* plane = dx + c * height * width;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const T* row = cols + ((c * k + ky) * k + kx) * positions;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= height) continue;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < width) plane[iy * width + ix] += row[oy * out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t nd = std::max(a.size(), b.size());
  Shape out(nd, 1);
  for (std::size_t k = 0; k < nd; ++k) {
    const Index ea = k < a.size() ? a[a.size() - 1 - k] : 1;
    const Index eb = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    }
    out[nd - 1 - k] = std::max(ea, eb);
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      "div", a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary_op<T>("scale", x, [factor](T v) { return v * factor; }, [factor](T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  return unary_op<T>("add_scalar", x, [offset](T v) { return v + offset; }, [](T) { return T(1); });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary_op<T>(
      "abs", x, [](T v) { return std::abs(v); }, [](T v) { return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary_op<T>("square", x, [](T v) { return v * v; }, [](T v) { return T(2) * v; });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return unary_op<T>(
      "clamp", x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  using Array = typename Tensor<T>::Array;
  Array out = Array::Constant(1, x.data().sum());
  return Tensor<T>::make_result({1}, std::move(out), "sum", {&x},
                                [](const Array& g, std::span<Array* const> gin) { *gin[0] += g[0]; });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  using Array = typename Tensor<T>::Array;
  const T n = T(x.size());
  Array out = Array::Constant(1, x.data().sum() / n);
  return Tensor<T>::make_result({1}, std::move(out), "mean", {&x},
                                [n](const Array& g, std::span<Array* const> gin) { *gin[0] += g[0] / n; });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  using Array = typename Tensor<T>::Array;
  require_dims(a.shape(), 2, "matmul");
  require_dims(b.shape(), 2, "matmul");
  const Index m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (b.extent(0) != k) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Array out(m * n);
  MapR<T>(out.data(), m, n).noalias() = CMapR<T>(a.data().data(), m, k) * CMapR<T>(b.data().data(), k, n);
  return Tensor<T>::make_result({m, n}, std::move(out), "matmul", {&a, &b},
                                [a, b, m, k, n](const Array& g, std::span<Array* const> gin) {
                                  CMapR<T> G(g.data(), m, n);
                                  if (gin[0])
                                    MapR<T>(gin[0]->data(), m, k).noalias() +=
                                        G * CMapR<T>(b.data().data(), k, n).transpose();
                                  if (gin[1])
                                    MapR<T>(gin[1]->data(), k, n).noalias() +=
                                        CMapR<T>(a.data().data(), m, k).transpose() * G;
                                });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  using Array = typename Tensor<T>::Array;
  require_dims(x.shape(), 2, "linear");
  require_dims(weight.shape(), 2, "linear");
  const Index n = x.extent(0), in = x.extent(1), out_f = weight.extent(0);
  if (weight.extent(1) != in) {
    throw ShapeError("linear: weight " + shape_str(weight.shape()) + " does not accept " + shape_str(x.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.size() != out_f) throw ShapeError("linear: bias size mismatch");
  Array out(n * out_f);
  MapR<T> Y(out.data(), n, out_f);
  Y.noalias() = CMapR<T>(x.data().data(), n, in) * CMapR<T>(weight.data().data(), out_f, in).transpose();
  if (has_bias) Y.rowwise() += bias.data().matrix().transpose();
  std::vector<Tensor<T>> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return Tensor<T>::make_result(
      {n, out_f}, std::move(out), "linear", parents,
      [x, weight, n, in, out_f, has_bias](const Array& g, std::span<Array* const> gin) {
        CMapR<T> G(g.data(), n, out_f);
        if (gin[0]) MapR<T>(gin[0]->data(), n, in).noalias() += G * CMapR<T>(weight.data().data(), out_f, in);
        if (gin[1])
          MapR<T>(gin[1]->data(), out_f, in).noalias() += G.transpose() * CMapR<T>(x.data().data(), n, in);
        if (has_bias && gin[2]) gin[2]->matrix() += G.colwise().sum().transpose();
      });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_dims(x.shape(), 2, "transpose");
  return permute(x, {1, 0});
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, Index axis) {
  using Array = typename Tensor<T>::Array;
  const Index ax = normalize_axis(axis, x.dim(), "softmax");
  const AxisSplit s = split_at(x.shape(), ax);
  Array out(x.size());
  const Array& v = x.data();
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.n * s.inner + i;
      T peak = v[base];
      for (Index j = 1; j < s.n; ++j) peak = std::max(peak, v[base + j * s.inner]);
      T total = 0;
      for (Index j = 0; j < s.n; ++j) {
        const T e = std::exp(v[base + j * s.inner] - peak);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (Index j = 0; j < s.n; ++j) out[base + j * s.inner] /= total;
    }
  }
  Array y = out;
  return Tensor<T>::make_result(x.shape(), std::move(out), "softmax", {&x},
                                [y = std::move(y), s](const Array& g, std::span<Array* const> gin) {
                                  for (Index o = 0; o < s.outer; ++o) {
                                    for (Index i = 0; i < s.inner; ++i) {
                                      const Index base = o * s.n * s.inner + i;
                                      T dot = 0;
                                      for (Index j = 0; j < s.n; ++j) dot += g[base + j * s.inner] * y[base + j * s.inner];
                                      for (Index j = 0; j < s.n; ++j) {
                                        const Index p = base + j * s.inner;
                                        (*gin[0])[p] += y[p] * (g[p] - dot);
                                      }
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return unary_op<T>(
      "gelu", x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v) { return T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(T(-0.5) * v * v); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return unary_op<T>(
      "leaky_relu", x, [slope](T v) { return v > 0 ? v : v * slope; },
      [slope](T v) { return v > 0 ? T(1) : slope; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  auto f = [](T v) {
    if (v >= 0) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
  };
  return unary_op<T>("sigmoid", x, f, [f](T v) {
    const T s = f(v);
    return s * (T(1) - s);
  });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return unary_op<T>(
      "softplus", x, [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](T v) {
        if (v >= 0) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      });
}

Index conv_output_extent(Index in, Index kernel, Index stride, Index padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, Conv2dOptions opt) {
  using Array = typename Tensor<T>::Array;
  require_dims(x.shape(), 3, "conv2d");
  require_dims(w.shape(), 4, "conv2d");
  const Index c_in = x.extent(0), height = x.extent(1), width = x.extent(2);
  const Index c_out = w.extent(0), k = w.extent(2);
  const Index groups = opt.groups, stride = opt.stride, pad = opt.padding;
  if (groups < 1 || c_in % groups != 0 || c_out % groups != 0) {
    throw ShapeError("conv2d: groups " + std::to_string(groups) + " must divide C_in " + std::to_string(c_in) +
                     " and C_out " + std::to_string(c_out));
  }
  const Index cg_in = c_in / groups, cg_out = c_out / groups;
  if (w.extent(1) != cg_in || w.extent(3) != k) {
    throw ShapeError("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " + shape_str(x.shape()) +
                     " and " + std::to_string(groups) + " groups");
  }
  if (k % 2 == 0) throw ShapeError("conv2d: kernel extent must be odd, got " + std::to_string(k));
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: invalid stride/padding");
  if (k > height + 2 * pad || k > width + 2 * pad) {
    throw ShapeError("conv2d: kernel " + std::to_string(k) + " larger than padded input " + shape_str(x.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.size() != c_out) throw ShapeError("conv2d: bias size mismatch");

  const Index out_h = conv_output_extent(height, k, stride, pad);
  const Index out_w = conv_output_extent(width, k, stride, pad);
  const Index positions = out_h * out_w;
  const Index patch = cg_in * k * k;
  const bool pointwise = k == 1 && stride == 1 && pad == 0;

  Array out(c_out * positions);
  std::vector<T> cols(pointwise ? 0 : std::size_t(patch * positions));
  for (Index g = 0; g < groups; ++g) {
    const T* xg = x.data().data() + g * cg_in * height * width;
    const T* col_ptr = xg;
    if (!pointwise) {
      im2col(xg, cg_in, height, width, k, stride, pad, out_h, out_w, cols.data());
      col_ptr = cols.data();
    }
    MapR<T>(out.data() + g * cg_out * positions, cg_out, positions).noalias() =
        CMapR<T>(w.data().data() + g * cg_out * patch, cg_out, patch) * CMapR<T>(col_ptr, patch, positions);
  }
  if (has_bias) {
    MapR<T>(out.data(), c_out, positions).colwise() += bias.data().matrix();
  }

  std::vector<Tensor<T>> parents{x, w};
  if (has_bias) parents.push_back(bias);
  return Tensor<T>::make_result(
      {c_out, out_h, out_w}, std::move(out), "conv2d", parents,
      [=](const Array& grad, std::span<Array* const> gin) {
        std::vector<T> cols_local(pointwise ? 0 : std::size_t(patch * positions));
        std::vector<T> dcols(pointwise ? 0 : std::size_t(patch * positions));
        for (Index g = 0; g < groups; ++g) {
          const T* xg = x.data().data() + g * cg_in * height * width;
          CMapR<T> G(grad.data() + g * cg_out * positions, cg_out, positions);
          CMapR<T> Wg(w.data().data() + g * cg_out * patch, cg_out, patch);
          if (gin[1]) {
            const T* col_ptr = xg;
            if (!pointwise) {
              im2col(xg, cg_in, height, width, k, stride, pad, out_h, out_w, cols_local.data());
              col_ptr = cols_local.data();
            }
            MapR<T>(gin[1]->data() + g * cg_out * patch, cg_out, patch).noalias() +=
                G * CMapR<T>(col_ptr, patch, positions).transpose();
          }
          if (gin[0]) {
            T* dxg = gin[0]->data() + g * cg_in * height * width;
            if (pointwise) {
              MapR<T>(dxg, patch, positions).noalias() += Wg.transpose() * G;
            } else {
              MapR<T>(dcols.data(), patch, positions).noalias() = Wg.transpose() * G;
              col2im_add(dcols.data(), cg_in, height, width, k, stride, pad, out_h, out_w, dxg);
            }
          }
        }
        if (has_bias && gin[2]) {
          gin[2]->matrix() += CMapR<T>(grad.data(), c_out, positions).rowwise().sum();
        }
      });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  using Array = typename Tensor<T>::Array;
  const Index c = x.shape().back();
  if (gamma.size() != c || beta.size() != c) {
    throw ShapeError("layer_norm: affine parameters must have " + std::to_string(c) + " entries");
  }
  const Index tokens = x.size() / c;
  Array out(x.size());
  Array xhat(x.size());
  Array inv_std(tokens);
  const Array& v = x.data();
  for (Index t = 0; t < tokens; ++t) {
    const auto row = v.segment(t * c, c);
    const bool constant = row.maxCoeff() == row.minCoeff();
    const T mu = row.mean();
    const T var = (row - mu).square().mean();
    inv_std[t] = T(1) / std::sqrt(var + eps);
    if (constant) {
      xhat.segment(t * c, c).setZero();
    } else {
      xhat.segment(t * c, c) = (row - mu) * inv_std[t];
    }
    out.segment(t * c, c) = xhat.segment(t * c, c) * gamma.data() + beta.data();
  }
  return Tensor<T>::make_result(
      x.shape(), std::move(out), "layer_norm", {&x, &gamma, &beta},
      [gamma, xhat = std::move(xhat), inv_std = std::move(inv_std), c, tokens](const Array& g,
                                                                                std::span<Array* const> gin) {
        for (Index t = 0; t < tokens; ++t) {
          const auto gt = g.segment(t * c, c);
          const auto xt = xhat.segment(t * c, c);
          if (gin[0]) {
            const Array dxhat = gt * gamma.data();
            const T mean_d = dxhat.mean();
            const T mean_dx = (dxhat * xt).mean();
            gin[0]->segment(t * c, c) += inv_std[t] * (dxhat - mean_d - xt * mean_dx);
          }
          if (gin[1]) *gin[1] += gt * xt;
          if (gin[2]) *gin[2] += gt;
        }
      });
}

template <typename T>
Tensor<T> avg_pool_spatial(const Tensor<T>& x) {
  using Array = typename Tensor<T>::Array;
  require_dims(x.shape(), 3, "avg_pool_spatial");
  const Index c = x.extent(0), hw = x.extent(1) * x.extent(2);
  Array out = CMapR<T>(x.data().data(), c, hw).rowwise().mean().array();
  return Tensor<T>::make_result({c}, std::move(out), "avg_pool_spatial", {&x},
                                [c, hw](const Array& g, std::span<Array* const> gin) {
                                  MapR<T>(gin[0]->data(), c, hw).colwise() += (g / T(hw)).matrix();
                                });
}

template <typename T>
Tensor<T> max_pool_spatial(const Tensor<T>& x) {
  using Array = typename Tensor<T>::Array;
  require_dims(x.shape(), 3, "max_pool_spatial");
  const Index c = x.extent(0), hw = x.extent(1) * x.extent(2);
  Array out(c);
  std::vector<Index> argmax(std::size_t(c), 0);
  const Array& v = x.data();
  for (Index ch = 0; ch < c; ++ch) {
    Index best = 0;
    for (Index p = 1; p < hw; ++p) {
      if (v[ch * hw + p] > v[ch * hw + best]) best = p;
    }
    argmax[std::size_t(ch)] = ch * hw + best;
    out[ch] = v[ch * hw + best];
  }
  return Tensor<T>::make_result({c}, std::move(out), "max_pool_spatial", {&x},
                                [argmax = std::move(argmax)](const Array& g, std::span<Array* const> gin) {
                                  for (std::size_t ch = 0; ch < argmax.size(); ++ch) (*gin[0])[argmax[ch]] += g[Index(ch)];
                                });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  using Array = typename Tensor<T>::Array;
  if (shape_numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  return Tensor<T>::make_result(std::move(shape), x.data(), "reshape", {&x},
                                [](const Array& g, std::span<Array* const> gin) { *gin[0] += g; });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<Index>& axes) {
  using Array = typename Tensor<T>::Array;
  const std::size_t nd = x.shape().size();
  if (axes.size() != nd) throw ShapeError("permute: axis list length does not match rank");
  std::vector<bool> seen(nd, false);
  for (Index a : axes) {
    if (a < 0 || std::size_t(a) >= nd || seen[std::size_t(a)]) throw ShapeError("permute: invalid axis list");
    seen[std::size_t(a)] = true;
  }
  std::vector<Index> in_strides(nd, 1);
  for (std::size_t d = nd - 1; d-- > 0;) in_strides[d] = in_strides[d + 1] * x.shape()[d + 1];
  Shape out_shape(nd);
  std::vector<Index> src_strides(nd);
  for (std::size_t d = 0; d < nd; ++d) {
    out_shape[d] = x.shape()[std::size_t(axes[d])];
    src_strides[d] = in_strides[std::size_t(axes[d])];
  }
  // map[o] = flat source index of output element o
  std::vector<Index> map(std::size_t(x.size()));
  {
    std::vector<Index> counter(nd, 0);
    Index src = 0;
    for (Index o = 0; o < x.size(); ++o) {
      map[std::size_t(o)] = src;
      for (std::size_t d = nd; d-- > 0;) {
        src += src_strides[d];
        if (++counter[d] < out_shape[d]) break;
        src -= src_strides[d] * out_shape[d];
        counter[d] = 0;
      }
    }
  }
  Array out(x.size());
  const Array& v = x.data();
  for (Index o = 0; o < x.size(); ++o) out[o] = v[map[std::size_t(o)]];
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), "permute", {&x},
                                [map = std::move(map)](const Array& g, std::span<Array* const> gin) {
                                  for (Index o = 0; o < g.size(); ++o) (*gin[0])[map[std::size_t(o)]] += g[o];
                                });
}

template <typename T>
Tensor<T> mean_along_axis(const Tensor<T>& x, Index axis) {
  using Array = typename Tensor<T>::Array;
  const Index ax = normalize_axis(axis, x.dim(), "mean_along_axis");
  const AxisSplit s = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + ax);
  if (out_shape.empty()) out_shape.push_back(1);
  Array out = Array::Zero(s.outer * s.inner);
  const Array& v = x.data();
  for (Index o = 0; o < s.outer; ++o)
    for (Index j = 0; j < s.n; ++j)
      for (Index i = 0; i < s.inner; ++i) out[o * s.inner + i] += v[(o * s.n + j) * s.inner + i];
  out /= T(s.n);
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), "mean_along_axis", {&x},
                                [s](const Array& g, std::span<Array* const> gin) {
                                  const T inv = T(1) / T(s.n);
                                  for (Index o = 0; o < s.outer; ++o)
                                    for (Index j = 0; j < s.n; ++j)
                                      for (Index i = 0; i < s.inner; ++i)
                                        (*gin[0])[(o * s.n + j) * s.inner + i] += g[o * s.inner + i] * inv;
                                });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, Index axis) {
  using Array = typename Tensor<T>::Array;
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const Index ax = normalize_axis(axis, xs.front().dim(), "concat");
  Shape out_shape = xs.front().shape();
  out_shape[std::size_t(ax)] = 0;
  std::vector<Index> extents;
  for (const auto& t : xs) {
    Shape probe = t.shape();
    if (probe.size() != out_shape.size()) throw ShapeError("concat: rank mismatch");
    extents.push_back(probe[std::size_t(ax)]);
    out_shape[std::size_t(ax)] += probe[std::size_t(ax)];
    probe[std::size_t(ax)] = out_shape[std::size_t(ax)];
    for (std::size_t d = 0; d < probe.size(); ++d) {
      if (Index(d) != ax && probe[d] != out_shape[d]) {
        throw ShapeError("concat: " + shape_str(t.shape()) + " does not align with " + shape_str(xs.front().shape()));
      }
    }
  }
  const AxisSplit s = split_at(out_shape, ax);
  Array out(shape_numel(out_shape));
  Index offset = 0;
  for (std::size_t p = 0; p < xs.size(); ++p) {
    const Index block = extents[p] * s.inner;
    for (Index o = 0; o < s.outer; ++o) {
      out.segment(o * s.n * s.inner + offset * s.inner, block) = xs[p].data().segment(o * block, block);
    }
    offset += extents[p];
  }
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), "concat", xs,
                                [extents, s](const Array& g, std::span<Array* const> gin) {
                                  Index offset = 0;
                                  for (std::size_t p = 0; p < extents.size(); ++p) {
                                    const Index block = extents[p] * s.inner;
                                    if (gin[p]) {
                                      for (Index o = 0; o < s.outer; ++o)
                                        gin[p]->segment(o * block, block) +=
                                            g.segment(o * s.n * s.inner + offset * s.inner, block);
                                    }
                                    offset += extents[p];
                                  }
                                });
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, Index top, Index left, Index height, Index width) {
  using Array = typename Tensor<T>::Array;
  require_dims(x.shape(), 3, "crop");
  const Index c = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > h || left + width > w) {
    throw ShapeError("crop: window out of bounds for " + shape_str(x.shape()));
  }
  Array out(c * height * width);
  const Array& v = x.data();
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < height; ++y)
      out.segment((ch * height + y) * width, width) = v.segment((ch * h + top + y) * w + left, width);
  return Tensor<T>::make_result({c, height, width}, std::move(out), "crop", {&x},
                                [=](const Array& g, std::span<Array* const> gin) {
                                  for (Index ch = 0; ch < c; ++ch)
                                    for (Index y = 0; y < height; ++y)
                                      gin[0]->segment((ch * h + top + y) * w + left, width) +=
                                          g.segment((ch * height + y) * width, width);
                                });
}

Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  Index r = i % period;
  if (r < 0) r += period;
  return r < n ? r : period - r;
}

template <typename T>
Tensor<T> pad_reflect(const Tensor<T>& x, Index bottom, Index right) {
  using Array = typename Tensor<T>::Array;
  require_dims(x.shape(), 3, "pad_reflect");
  if (bottom < 0 || right < 0) throw ShapeError("pad_reflect: negative padding");
  const Index c = x.extent(0), h = x.extent(1), w = x.extent(2);
  const Index oh = h + bottom, ow = w + right;
  std::vector<Index> src(std::size_t(oh * ow));
  for (Index y = 0; y < oh; ++y)
    for (Index xx = 0; xx < ow; ++xx) src[std::size_t(y * ow + xx)] = reflect_index(y, h) * w + reflect_index(xx, w);
  Array out(c * oh * ow);
  const Array& v = x.data();
  for (Index ch = 0; ch < c; ++ch)
    for (Index p = 0; p < oh * ow; ++p) out[ch * oh * ow + p] = v[ch * h * w + src[std::size_t(p)]];
  return Tensor<T>::make_result({c, oh, ow}, std::move(out), "pad_reflect", {&x},
                                [src = std::move(src), c, h, w, oh, ow](const Array& g, std::span<Array* const> gin) {
                                  for (Index ch = 0; ch < c; ++ch)
                                    for (Index p = 0; p < oh * ow; ++p)
                                      (*gin[0])[ch * h * w + src[std::size_t(p)]] += g[ch * oh * ow + p];
                                });
}

#define PFAN_INSTANTIATE_OPS(T)                                                                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> scale(const Tensor<T>&, T);                                                     \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                \
  template Tensor<T> abs(const Tensor<T>&);                                                          \
  template Tensor<T> square(const Tensor<T>&);                                                       \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                                  \
  template Tensor<T> sum(const Tensor<T>&);                                                          \
  template Tensor<T> mean(const Tensor<T>&);                                                         \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> transpose(const Tensor<T>&);                                                    \
  template Tensor<T> softmax(const Tensor<T>&, Index);                                               \
  template Tensor<T> gelu(const Tensor<T>&);                                                         \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                      \
  template Tensor<T> softplus(const Tensor<T>&);                                                     \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dOptions);    \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);            \
  template Tensor<T> avg_pool_spatial(const Tensor<T>&);                                             \
  template Tensor<T> max_pool_spatial(const Tensor<T>&);                                             \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                               \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<Index>&);                           \
  template Tensor<T> mean_along_axis(const Tensor<T>&, Index);                                       \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, Index);                                   \
  template Tensor<T> crop(const Tensor<T>&, Index, Index, Index, Index);                             \
  template Tensor<T> pad_reflect(const Tensor<T>&, Index, Index);

PFAN_INSTANTIATE_OPS(float)
PFAN_INSTANTIATE_OPS(double)

#undef PFAN_INSTANTIATE_OPS

}  // namespace pfan
