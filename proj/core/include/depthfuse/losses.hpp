#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "depthfuse/autodiff.hpp"
#include "depthfuse/tensor.hpp"

namespace depthfuse {

// Per-pixel validity, one byte per (n, y, x); nonzero means valid. An empty
// span means every pixel is valid.
using MaskView = std::span<const std::uint8_t>;

// K depth classes with edges spaced uniformly in log-depth between d_min and
// d_max.
struct DiscretizationSpec {
  std::size_t bins = 32;
  double d_min = 1.0;
  double d_max = 10.0;

  void validate() const;
  // Edge i for i in [0, bins]; edge(0) == d_min, edge(bins) == d_max.
  double edge(std::size_t i) const;
  // Geometric mean of the bin's two edges.
  double center(std::size_t bin) const;
  // Clamped to [0, bins-1]; throws DataError for non-positive depth.
  std::int32_t bin_of(double depth) const;
};

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.1;
  std::size_t ssim_window = 7;
  // C1 = (k1 L)^2 and C2 = (k2 L)^2 with L the dynamic range unless the
  // constants are given explicitly.
  double ssim_k1 = 0.01;
  double ssim_k2 = 0.03;
  std::optional<double> ssim_c1;
  std::optional<double> ssim_c2;

  void validate() const;
};

struct SsimParams {
  std::size_t window = 7;
  double c1 = 1e-4;
  double c2 = 9e-4;

  static SsimParams from(const LossWeights& weights, double dynamic_range);
  void validate() const;
};

// SSIM evaluated at every window position whose pixels are all valid. The
// map has shape (N*C) x (H-window+1) x (W-window+1); invalid positions hold 0
// and are excluded from the mean.
struct SsimMap {
  std::size_t planes = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;
  std::size_t valid_count = 0;
  double mean = 0.0;
};

template <std::floating_point T>
SsimMap ssim(const Tensor<T>& x, const Tensor<T>& y, MaskView mask, const SsimParams& params);

// (1/n) sum over valid pixels of |pred - truth|.
template <std::floating_point T>
Var<T> l1_depth_loss(Var<T> pred, const Tensor<T>& truth, MaskView mask);

// (1 - mean SSIM) / 2, differentiable in pred.
template <std::floating_point T>
Var<T> ssim_loss(Var<T> pred, const Tensor<T>& truth, MaskView mask, const SsimParams& params);

// Bin labels for an N x 1 x H x W depth tensor; invalid pixels get -1.
template <std::floating_point T>
std::vector<std::int32_t> discretize_depth(const Tensor<T>& depth, MaskView mask,
                                           const DiscretizationSpec& spec);

// Mean over valid pixels of -log softmax(logits)[label]. logits is N x K x H x W.
template <std::floating_point T>
Var<T> multinomial_logistic_loss(Var<T> logits, std::span<const std::int32_t> labels,
                                 MaskView mask);

struct LossBreakdown {
  double depth = 0.0;
  double ssim = 0.0;
  double logistic = 0.0;
  // alpha*depth, beta*ssim, gamma*logistic; they add up to total exactly.
  double weighted_depth = 0.0;
  double weighted_ssim = 0.0;
  double weighted_logistic = 0.0;
  double total = 0.0;
};

template <std::floating_point T>
struct CombinedLoss {
  Var<T> total;
  LossBreakdown breakdown;
};

template <std::floating_point T>
CombinedLoss<T> combined_loss(Var<T> pred_depth, Var<T> logits, const Tensor<T>& truth,
                              MaskView mask, const LossWeights& weights,
                              const DiscretizationSpec& spec);

}  // namespace depthfuse
