#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "depthfuse/autodiff.hpp"
#include "depthfuse/tensor.hpp"

namespace depthfuse {

// Parallel convolutions with different kernel sizes over the same input.
struct MultiScaleBlockConfig {
  std::vector<std::size_t> kernel_sizes{1, 3, 5, 7};
  std::size_t branch_channels = 16;
  std::size_t repeats = 4;
  // false merges branches by elementwise sum (ablation).
  bool concat = true;

  void validate() const;
  std::size_t merged_channels() const;
};

// Parallel convolutions with one kernel size at several dilation rates.
struct DilatedBlockConfig {
  std::vector<std::size_t> rates{1, 2, 4};
  std::size_t kernel_size = 3;
  std::size_t branch_channels = 16;
  std::size_t repeats = 4;
  // false forces every rate to 1 (ablation); parameter shapes are unchanged.
  bool dilation = true;

  void validate() const;
  std::vector<std::size_t> effective_rates() const;
  std::size_t merged_channels(bool concat) const;
};

// Residual encoder. Stage 0 runs at input resolution, every later stage
// starts with a 2x2 average pool, so the encoder downsamples by
// 2^(stages-1).
struct BackboneConfig {
  std::vector<std::size_t> stage_widths{16, 32, 64};
  std::size_t units_per_stage = 2;
  // Group normalisation after every encoder and decoder convolution, with
  // this many channels per group; 0 disables it. Must divide every width.
  std::size_t norm_group_channels = 4;
};

struct NetworkConfig {
  std::size_t input_channels = 3;
  BackboneConfig backbone;
  MultiScaleBlockConfig multiscale;
  DilatedBlockConfig dilated;
  bool skip_connections = true;
  std::size_t depth_bins = 32;

  void validate() const;
  // Input height and width must be multiples of this.
  std::size_t downsample_factor() const;
  std::size_t bottleneck_channels() const { return backbone.stage_widths.back(); }
};

struct ParamSpec {
  std::string name;
  Shape shape;
  // Filled with `fill` when false; otherwise normal with std
  // sqrt(init_gain/fan_in) (He for gain 2).
  bool is_weight = true;
  double init_gain = 2.0;
  double fill = 0.0;
  std::size_t fan_in() const { return shape.c * shape.h * shape.w; }
};

// Ordered weights and biases keyed by hierarchical names such as
// "encoder.stage1.unit0.conv2.weight".
template <std::floating_point T>
class Parameters {
 public:
  void add(std::string name, Tensor<T> value);

  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_.at(i).first; }
  const Tensor<T>& operator[](std::size_t i) const { return entries_.at(i).second; }
  Tensor<T>& operator[](std::size_t i) { return entries_.at(i).second; }
  std::optional<std::size_t> find(std::string_view name) const;
  const Tensor<T>& at(std::string_view name) const;
  Tensor<T>& at(std::string_view name);
  std::size_t scalar_count() const;

  friend bool operator==(const Parameters& a, const Parameters& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Parameters registered on a tape, addressable by name.
template <std::floating_point T>
class BoundParameters {
 public:
  BoundParameters(Tape<T>& tape, const Parameters<T>& params, bool requires_grad);
  // Binds existing tape variables to the names of `params`, in order.
  BoundParameters(const Parameters<T>& params, std::span<const Var<T>> vars);

  Var<T> operator()(std::string_view name) const;
  std::size_t size() const noexcept { return vars_.size(); }
  Var<T> operator[](std::size_t i) const { return vars_[i]; }

 private:
  std::vector<Var<T>> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <std::floating_point T>
struct NetworkOutput {
  Var<T> depth;   // N x 1 x H x W, strictly positive
  Var<T> logits;  // N x K x H x W
};

std::vector<ParamSpec> parameter_layout(const NetworkConfig& config);
std::size_t parameter_count(const NetworkConfig& config);

void append_multi_scale_layout(std::vector<ParamSpec>& layout, std::string_view prefix,
                               std::size_t channels, const MultiScaleBlockConfig& config);
void append_dilated_layout(std::vector<ParamSpec>& layout, std::string_view prefix,
                           std::size_t channels, const DilatedBlockConfig& config, bool concat);

template <std::floating_point T>
Parameters<T> initialize_parameters(std::span<const ParamSpec> layout, std::uint64_t seed);

// Each repeat: branch convs (ReLU) -> concat or sum -> 1x1 projection back to
// the input width (ReLU).
template <std::floating_point T>
Var<T> multi_scale_block(Var<T> input, const MultiScaleBlockConfig& config,
                         const BoundParameters<T>& params, std::string_view prefix);

template <std::floating_point T>
Var<T> dilated_block(Var<T> input, const DilatedBlockConfig& config, bool concat,
                     const BoundParameters<T>& params, std::string_view prefix);

template <std::floating_point T>
class DepthNetwork {
 public:
  // Deterministic He initialisation from seed.
  static DepthNetwork build(const NetworkConfig& config, std::uint64_t seed);

  // Throws ConfigError when names or shapes disagree with the config.
  DepthNetwork(NetworkConfig config, Parameters<T> params);

  const NetworkConfig& config() const noexcept { return config_; }
  const Parameters<T>& parameters() const noexcept { return params_; }
  Parameters<T>& parameters() noexcept { return params_; }

  NetworkOutput<T> forward(const BoundParameters<T>& params, Var<T> image) const;

  // Inference without parameter gradients.
  NetworkOutput<T> forward(Tape<T>& tape, const Tensor<T>& image) const;

 private:
  NetworkConfig config_;
  Parameters<T> params_;
};

// One layer on the path from an output activation back to the input.
struct LayerGeometry {
  std::size_t kernel = 1;
  std::size_t dilation = 1;
  std::size_t stride = 1;
};

// Composes extents: rf += (k-1)*d*jump, jump *= stride.
std::size_t receptive_field(std::span<const LayerGeometry> layers);

// Layers of the deepest path from the input to the fused bottleneck
// features: stem, residual convs and pools, then the widest branch of every
// fusion-block repeat.
std::vector<LayerGeometry> trunk_geometry(const NetworkConfig& config);

// Receptive field, in input pixels, of one fused bottleneck activation.
std::size_t receptive_field(const NetworkConfig& config);

extern template class Parameters<float>;
extern template class Parameters<double>;
extern template class BoundParameters<float>;
extern template class BoundParameters<double>;
extern template class DepthNetwork<float>;
extern template class DepthNetwork<double>;

}  // namespace depthfuse
