#pragma once

#include <concepts>
#include <cstddef>
#include <span>

#include "depthfuse/autodiff.hpp"
#include "depthfuse/tensor.hpp"

namespace depthfuse {

// Geometry of a 2-D cross-correlation. Kernel extents must agree with the
// weight tensor passed to conv2d.
struct ConvSpec {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;

  // Square kernel with padding dilation*(k-1)/2, which preserves spatial
  // size for odd k at stride 1.
  static ConvSpec same(std::size_t kernel, std::size_t dilation = 1);

  // Effective span of the dilated kernel along one axis.
  std::size_t extent_h() const noexcept { return dilation * (kernel_h - 1) + 1; }
  std::size_t extent_w() const noexcept { return dilation * (kernel_w - 1) + 1; }

  // floor((in + 2*pad - dilation*(k-1) - 1) / stride) + 1; throws
  // ConfigError when that would be < 1.
  std::size_t output_h(std::size_t in) const;
  std::size_t output_w(std::size_t in) const;

  void validate() const;
};

// weight: (C_out, C_in, kH, kW); bias: (1, C_out, 1, 1).
template <std::floating_point T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, const ConvSpec& spec);

template <std::floating_point T>
Var<T> concat_channels(std::span<const Var<T>> inputs);

template <std::floating_point T>
Var<T> relu(Var<T> input);

// ln(1 + e^x), evaluated without overflow.
template <std::floating_point T>
Var<T> softplus(Var<T> input);

// Normalises each sample over groups of consecutive channels, then applies a
// per-channel scale and shift; gamma and beta have shape (1, C, 1, 1).
template <std::floating_point T>
Var<T> group_norm(Var<T> input, Var<T> gamma, Var<T> beta, std::size_t groups, T epsilon = T(1e-5));

template <std::floating_point T>
Var<T> add(Var<T> a, Var<T> b);

template <std::floating_point T>
Var<T> add_n(std::span<const Var<T>> inputs);

// 2x2 window mean with stride 2.
template <std::floating_point T>
Var<T> avg_pool2(Var<T> input);

// Bilinear resize by an integer factor, half-pixel centres (align_corners
// = false), edge-clamped.
template <std::floating_point T>
Var<T> upsample_bilinear(Var<T> input, std::size_t factor);

template <std::floating_point T>
Var<T> sum(Var<T> input);

template <std::floating_point T>
Var<T> mean(Var<T> input);

template <std::floating_point T>
Var<T> scale(Var<T> input, T factor);

// Scalar result sum_i input_i * weights_i for a constant weights tensor.
template <std::floating_point T>
Var<T> dot(Var<T> input, const Tensor<T>& weights);

// sum_i weights[i] * scalars[i], accumulated left to right.
template <std::floating_point T>
Var<T> weighted_sum(std::span<const Var<T>> scalars, std::span<const T> weights);

}  // namespace depthfuse
