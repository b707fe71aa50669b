#pragma once

// Differentiable kernels. Feature maps use B x C x H x W layout; matrices are
// rank-2 row-major. All ops are instantiated for float and double.

#include <cstdint>
#include <memory>
#include <vector>

#include "tcvsr/autograd.hpp"

namespace tcvsr {

enum class PadMode { Zero, Replicate };

template <typename T>
Var<T> constant(Tensor<T> value) {
  return Var<T>(std::move(value), false);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T s);
/// a * s where s holds a single learnable value.
template <typename T>
Var<T> scale_by(const Var<T>& a, const Var<T>& s);
template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope);

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis);
template <typename T>
Var<T> slice(const Var<T>& x, int axis, std::int64_t start, std::int64_t length);
template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);
/// Rank-2 transpose.
template <typename T>
Var<T> transpose(const Var<T>& x);
/// out[i] = x[index[i]] with out reshaped to `shape`.
template <typename T>
Var<T> gather(const Var<T>& x, std::shared_ptr<const std::vector<std::int64_t>> index, Shape shape);

/// (M x K) * (K x N).
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);
/// Softmax over the last axis of a rank-2 tensor, max-subtracted.
template <typename T>
Var<T> softmax_rows(const Var<T>& x);

/// weight: Cout x Cin x kH x kW; bias: Cout (may be undefined).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding,
              PadMode mode = PadMode::Zero);
/// weight: Cout x Cin x kH x kW. Output side (H - 1) * stride + kH - 2 * padding.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding);

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r);
template <typename T>
Var<T> pixel_unshuffle(const Var<T>& x, int r);

/// Bilinear backward warp: out(y, x) = src sampled at (x + flow_x, y + flow_y),
/// coordinates clamped to the image rectangle. flow: B x 2 x H x W.
template <typename T>
Var<T> warp(const Var<T>& src, const Var<T>& flow);
/// 2x2 mean pooling.
template <typename T>
Var<T> avg_pool2x(const Var<T>& x);
/// 2x bilinear upsampling with half-pixel centers and edge clamping.
template <typename T>
Var<T> upsample2x(const Var<T>& x);

template <typename T>
Var<T> sum(const Var<T>& x);
template <typename T>
Var<T> mean(const Var<T>& x);
/// sum(x * w) for a constant w of the same size.
template <typename T>
Var<T> dot(const Var<T>& x, const Tensor<T>& w);
/// mean(sqrt((a - b)^2 + eps^2)).
template <typename T>
Var<T> charbonnier(const Var<T>& a, const Var<T>& b, T eps);

// Non-differentiable helpers on plain tensors.
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r);
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r);
template <typename T>
Tensor<T> warp(const Tensor<T>& src, const Tensor<T>& flow);

}  // namespace tcvsr
