#pragma once

#include <vector>

#include "pfan/tensor.hpp"

namespace pfan {

// Elementwise arithmetic with trailing-dimension broadcasting: shapes are
// right-aligned and each aligned extent must match or be 1.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
Shape broadcast_shape(const Shape& a, const Shape& b);

template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T offset);
template <typename T> Tensor<T> abs(const Tensor<T>& x);
template <typename T> Tensor<T> square(const Tensor<T>& x);
/// Clamps values; the gradient passes through inside the interval only.
template <typename T> Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

/// [m×k] · [k×n] → [m×n].
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// Token-wise affine map: x [N×in], weight [out×in], bias [out] or undefined.
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);
/// 2-d transpose.
template <typename T> Tensor<T> transpose(const Tensor<T>& x);

/// Max-subtracted softmax along `axis` (negative axes count from the end).
template <typename T> Tensor<T> softmax(const Tensor<T>& x, Index axis);

/// Exact GELU, x·Φ(x) with Φ evaluated through erf.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2));
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
/// log(1 + e^x), computed stably.
template <typename T> Tensor<T> softplus(const Tensor<T>& x);

struct Conv2dOptions {
  Index stride = 1;
  Index padding = 0;
  Index groups = 1;
};

/// Grouped cross-correlation of x [C_in×H×W] with w [C_out×(C_in/g)×k×k].
/// `bias` may be undefined. Zero padding on all four sides.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, Conv2dOptions opt = {});
Index conv_output_extent(Index in, Index kernel, Index stride, Index padding);

/// Normalizes over the last axis. A token whose entries are all equal has its
/// normalized part defined as 0, so the output there is `beta`.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));

/// Global spatial reductions [C×H×W] → [C].
template <typename T> Tensor<T> avg_pool_spatial(const Tensor<T>& x);
/// Gradient is routed to the first maximum in row-major scan order.
template <typename T> Tensor<T> max_pool_spatial(const Tensor<T>& x);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<Index>& axes);
/// Reduces `axis` away (the output has one dimension fewer).
template <typename T> Tensor<T> mean_along_axis(const Tensor<T>& x, Index axis);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, Index axis);
template <typename T> Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) { return concat(xs, 0); }

/// Spatial window [C×h×w] taken at (top, left) of x [C×H×W].
template <typename T> Tensor<T> crop(const Tensor<T>& x, Index top, Index left, Index height, Index width);
/// Mirror padding (edge sample not repeated) appended at the bottom and right
/// of x [C×H×W]. Any pad length is accepted; the mirror is periodic.
template <typename T> Tensor<T> pad_reflect(const Tensor<T>& x, Index bottom, Index right);
Index reflect_index(Index i, Index n);

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

}  // namespace pfan
