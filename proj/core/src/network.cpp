#include "depthfuse/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "depthfuse/error.hpp"
#include "depthfuse/ops.hpp"
#include "depthfuse/random.hpp"

namespace depthfuse {
namespace {

std::string join(std::string_view prefix, std::string_view leaf) {
  std::string out(prefix);
  if (!out.empty()) out += '.';
  out += leaf;
  return out;
}

void add_conv(std::vector<ParamSpec>& layout, const std::string& name, std::size_t out_c,
              std::size_t in_c, std::size_t k) {
  layout.push_back(ParamSpec{name + ".weight", Shape{out_c, in_c, k, k}, true});
  layout.push_back(ParamSpec{name + ".bias", Shape{1, out_c, 1, 1}, false});
}

void add_norm(std::vector<ParamSpec>& layout, const std::string& name, std::size_t channels) {
  layout.push_back(ParamSpec{name + ".scale", Shape{1, channels, 1, 1}, false, 0.0, 1.0});
  layout.push_back(ParamSpec{name + ".shift", Shape{1, channels, 1, 1}, false});
}

template <typename T>
Var<T> conv(const BoundParameters<T>& p, const std::string& name, Var<T> x, const ConvSpec& spec) {
  return conv2d(x, p(name + ".weight"), p(name + ".bias"), spec);
}

// Convolution followed by group normalisation when enabled.
template <typename T>
Var<T> conv_norm(const BoundParameters<T>& p, const std::string& name, Var<T> x, const ConvSpec& spec,
                 std::size_t group_channels) {
  Var<T> y = conv(p, name, x, spec);
  if (group_channels == 0) return y;
  return group_norm(y, p(name + ".norm.scale"), p(name + ".norm.shift"), y.shape().c / group_channels);
}

template <typename T>
Var<T> merge_branches(std::vector<Var<T>>& branches, bool concat) {
  if (branches.size() == 1) return branches.front();
  if (concat) return concat_channels<T>(branches);
  return add_n<T>(branches);
}

}  // namespace

void MultiScaleBlockConfig::validate() const {
  if (kernel_sizes.empty()) throw ConfigError("multiscale.kernel_sizes must not be empty");
  for (std::size_t k : kernel_sizes) {
    if (k == 0 || k % 2 == 0) throw ConfigError("multiscale.kernel_sizes: " + std::to_string(k) + " is not odd");
  }
  if (branch_channels == 0) throw ConfigError("multiscale.branch_channels must be positive");
  if (repeats == 0) throw ConfigError("multiscale.repeats must be positive");
}

std::size_t MultiScaleBlockConfig::merged_channels() const {
  return concat ? kernel_sizes.size() * branch_channels : branch_channels;
}

void DilatedBlockConfig::validate() const {
  if (rates.empty()) throw ConfigError("dilated.rates must not be empty");
  if (std::count(rates.begin(), rates.end(), std::size_t{1}) != 1) {
    throw ConfigError("dilated.rates must contain the plain rate 1 exactly once");
  }
  for (std::size_t r : rates) {
    if (r == 0) throw ConfigError("dilated.rates must be positive");
  }
  if (kernel_size == 0 || kernel_size % 2 == 0) throw ConfigError("dilated.kernel_size must be odd");
  if (branch_channels == 0) throw ConfigError("dilated.branch_channels must be positive");
  if (repeats == 0) throw ConfigError("dilated.repeats must be positive");
}

std::vector<std::size_t> DilatedBlockConfig::effective_rates() const {
  if (dilation) return rates;
  return std::vector<std::size_t>(rates.size(), 1);
}

std::size_t DilatedBlockConfig::merged_channels(bool concat) const {
  return concat ? rates.size() * branch_channels : branch_channels;
}

void NetworkConfig::validate() const {
  if (input_channels == 0) throw ConfigError("network.input_channels must be positive");
  if (backbone.stage_widths.empty()) throw ConfigError("network.stage_widths must not be empty");
  for (std::size_t w : backbone.stage_widths) {
    if (w == 0) throw ConfigError("network.stage_widths must be positive");
  }
  if (backbone.units_per_stage == 0) throw ConfigError("network.units_per_stage must be positive");
  if (backbone.norm_group_channels != 0) {
    for (std::size_t w : backbone.stage_widths) {
      if (w % backbone.norm_group_channels != 0) {
        throw ConfigError("network.norm_group_channels (" + std::to_string(backbone.norm_group_channels) +
                          ") must divide every stage width, not " + std::to_string(w));
      }
    }
  }
  if (depth_bins < 2) throw ConfigError("network.depth_bins must be >= 2");
  multiscale.validate();
  dilated.validate();
}

std::size_t NetworkConfig::downsample_factor() const {
  return std::size_t{1} << (backbone.stage_widths.size() - 1);
}

template <std::floating_point T>
void Parameters<T>::add(std::string name, Tensor<T> value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

template <std::floating_point T>
std::optional<std::size_t> Parameters<T>::find(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

template <std::floating_point T>
const Tensor<T>& Parameters<T>::at(std::string_view name) const {
  const auto i = find(name);
  if (!i) throw ConfigError("unknown parameter " + std::string(name));
  return entries_[*i].second;
}

template <std::floating_point T>
Tensor<T>& Parameters<T>::at(std::string_view name) {
  const auto i = find(name);
  if (!i) throw ConfigError("unknown parameter " + std::string(name));
  return entries_[*i].second;
}

template <std::floating_point T>
std::size_t Parameters<T>::scalar_count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += e.second.numel();
  return total;
}

template <std::floating_point T>
BoundParameters<T>::BoundParameters(Tape<T>& tape, const Parameters<T>& params, bool requires_grad) {
  vars_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    vars_.push_back(requires_grad ? tape.variable(params[i]) : tape.constant(params[i]));
    index_.emplace(params.name(i), i);
  }
}

template <std::floating_point T>
BoundParameters<T>::BoundParameters(const Parameters<T>& params, std::span<const Var<T>> vars)
    : vars_(vars.begin(), vars.end()) {
  if (vars.size() != params.size()) {
    throw ConfigError("binding " + std::to_string(vars.size()) + " variables to " +
                      std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (vars[i].shape() != params[i].shape()) {
      throw ConfigError("variable for " + params.name(i) + " has shape " + vars[i].shape().str());
    }
    index_.emplace(params.name(i), i);
  }
}

template <std::floating_point T>
Var<T> BoundParameters<T>::operator()(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("parameter " + std::string(name) + " is not bound");
  return vars_[it->second];
}

void append_multi_scale_layout(std::vector<ParamSpec>& layout, std::string_view prefix,
                               std::size_t channels, const MultiScaleBlockConfig& config) {
  config.validate();
  for (std::size_t r = 0; r < config.repeats; ++r) {
    const std::string rep = join(prefix, "repeat" + std::to_string(r));
    for (std::size_t b = 0; b < config.kernel_sizes.size(); ++b) {
      add_conv(layout, join(rep, "branch" + std::to_string(b)), config.branch_channels, channels,
               config.kernel_sizes[b]);
    }
    add_conv(layout, join(rep, "project"), channels, config.merged_channels(), 1);
    // A sum of B branches has B times the variance of one branch.
    if (!config.concat) layout[layout.size() - 2].init_gain /= static_cast<double>(config.kernel_sizes.size());
  }
}

void append_dilated_layout(std::vector<ParamSpec>& layout, std::string_view prefix,
                           std::size_t channels, const DilatedBlockConfig& config, bool concat) {
  config.validate();
  for (std::size_t r = 0; r < config.repeats; ++r) {
    const std::string rep = join(prefix, "repeat" + std::to_string(r));
    for (std::size_t b = 0; b < config.rates.size(); ++b) {
      add_conv(layout, join(rep, "branch" + std::to_string(b)), config.branch_channels, channels,
               config.kernel_size);
    }
    add_conv(layout, join(rep, "project"), channels, config.merged_channels(concat), 1);
    if (!concat) layout[layout.size() - 2].init_gain /= static_cast<double>(config.rates.size());
  }
}

std::vector<ParamSpec> parameter_layout(const NetworkConfig& config) {
  config.validate();
  const auto& widths = config.backbone.stage_widths;
  const bool norm = config.backbone.norm_group_channels != 0;
  std::vector<ParamSpec> layout;
  const auto add_conv_norm = [&](const std::string& name, std::size_t out_c, std::size_t in_c, std::size_t k) {
    add_conv(layout, name, out_c, in_c, k);
    if (norm) add_norm(layout, name + ".norm", out_c);
  };
  add_conv_norm("stem", widths[0], config.input_channels, 3);
  std::size_t prev = widths[0];
  for (std::size_t s = 0; s < widths.size(); ++s) {
    for (std::size_t u = 0; u < config.backbone.units_per_stage; ++u) {
      const std::string unit = "encoder.stage" + std::to_string(s) + ".unit" + std::to_string(u);
      add_conv_norm(unit + ".conv1", widths[s], prev, 3);
      add_conv_norm(unit + ".conv2", widths[s], widths[s], 3);
      if (prev != widths[s]) add_conv_norm(unit + ".shortcut", widths[s], prev, 1);
      prev = widths[s];
    }
  }
  const std::size_t bottleneck = config.bottleneck_channels();
  append_multi_scale_layout(layout, "fusion.multiscale", bottleneck, config.multiscale);
  append_dilated_layout(layout, "fusion.dilated", bottleneck, config.dilated, config.multiscale.concat);
  std::size_t cur = bottleneck;
  for (std::size_t s = widths.size() - 1; s-- > 0;) {
    const std::size_t in = cur + (config.skip_connections ? widths[s] : 0);
    add_conv_norm("decoder.stage" + std::to_string(s) + ".conv", widths[s], in, 3);
    cur = widths[s];
  }
  add_conv(layout, "head.depth", 1, cur, 3);
  add_conv(layout, "head.logits", config.depth_bins, cur, 1);
  return layout;
}

std::size_t parameter_count(const NetworkConfig& config) {
  std::size_t total = 0;
  for (const auto& p : parameter_layout(config)) total += p.shape.numel();
  return total;
}

template <std::floating_point T>
Parameters<T> initialize_parameters(std::span<const ParamSpec> layout, std::uint64_t seed) {
  Parameters<T> params;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const ParamSpec& spec = layout[i];
    Tensor<T> value(spec.shape, static_cast<T>(spec.fill));
    if (spec.is_weight) {
      Rng rng(derive_seed(seed, i));
      const double std_dev = std::sqrt(spec.init_gain / static_cast<double>(spec.fan_in()));
      for (T& v : value.data()) v = static_cast<T>(std_dev * standard_normal(rng));
    }
    params.add(spec.name, std::move(value));
  }
  return params;
}

template <std::floating_point T>
Var<T> multi_scale_block(Var<T> input, const MultiScaleBlockConfig& config,
                         const BoundParameters<T>& params, std::string_view prefix) {
  config.validate();
  Var<T> x = input;
  for (std::size_t r = 0; r < config.repeats; ++r) {
    const std::string rep = join(prefix, "repeat" + std::to_string(r));
    std::vector<Var<T>> branches;
    for (std::size_t b = 0; b < config.kernel_sizes.size(); ++b) {
      branches.push_back(relu(conv(params, join(rep, "branch" + std::to_string(b)), x,
                                   ConvSpec::same(config.kernel_sizes[b]))));
    }
    x = relu(conv(params, join(rep, "project"), merge_branches(branches, config.concat), ConvSpec::same(1)));
  }
  return x;
}

template <std::floating_point T>
Var<T> dilated_block(Var<T> input, const DilatedBlockConfig& config, bool concat,
                     const BoundParameters<T>& params, std::string_view prefix) {
  config.validate();
  const auto rates = config.effective_rates();
  Var<T> x = input;
  for (std::size_t r = 0; r < config.repeats; ++r) {
    const std::string rep = join(prefix, "repeat" + std::to_string(r));
    std::vector<Var<T>> branches;
    for (std::size_t b = 0; b < rates.size(); ++b) {
      branches.push_back(relu(conv(params, join(rep, "branch" + std::to_string(b)), x,
                                   ConvSpec::same(config.kernel_size, rates[b]))));
    }
    x = relu(conv(params, join(rep, "project"), merge_branches(branches, concat), ConvSpec::same(1)));
  }
  return x;
}

template <std::floating_point T>
DepthNetwork<T> DepthNetwork<T>::build(const NetworkConfig& config, std::uint64_t seed) {
  const auto layout = parameter_layout(config);
  return DepthNetwork(config, initialize_parameters<T>(layout, seed));
}

template <std::floating_point T>
DepthNetwork<T>::DepthNetwork(NetworkConfig config, Parameters<T> params)
    : config_(std::move(config)), params_(std::move(params)) {
  const auto layout = parameter_layout(config_);
  if (layout.size() != params_.size()) {
    throw ConfigError("network expects " + std::to_string(layout.size()) + " parameter tensors, got " +
                      std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].name != params_.name(i)) {
      throw ConfigError("parameter " + std::to_string(i) + " is " + params_.name(i) + ", expected " +
                        layout[i].name);
    }
    if (layout[i].shape != params_[i].shape()) {
      throw ConfigError("parameter " + layout[i].name + " has shape " + params_[i].shape().str() +
                        ", expected " + layout[i].shape.str());
    }
  }
}

template <std::floating_point T>
NetworkOutput<T> DepthNetwork<T>::forward(const BoundParameters<T>& p, Var<T> image) const {
  const Shape in = image.shape();
  if (in.c != config_.input_channels) {
    throw ConfigError("network expects " + std::to_string(config_.input_channels) +
                      " input channels, got " + std::to_string(in.c));
  }
  const std::size_t factor = config_.downsample_factor();
  if (in.h % factor != 0 || in.w % factor != 0 || in.h == 0 || in.w == 0) {
    throw ConfigError("input size " + std::to_string(in.h) + "x" + std::to_string(in.w) +
                      " must be a positive multiple of " + std::to_string(factor) + " in both dimensions");
  }
  const auto& widths = config_.backbone.stage_widths;
  const ConvSpec k3 = ConvSpec::same(3);
  const ConvSpec k1 = ConvSpec::same(1);

  const std::size_t gc = config_.backbone.norm_group_channels;
  Var<T> x = relu(conv_norm(p, "stem", image, k3, gc));
  std::vector<Var<T>> skips;
  for (std::size_t s = 0; s < widths.size(); ++s) {
    if (s > 0) x = avg_pool2(x);
    for (std::size_t u = 0; u < config_.backbone.units_per_stage; ++u) {
      const std::string unit = "encoder.stage" + std::to_string(s) + ".unit" + std::to_string(u);
      Var<T> y = relu(conv_norm(p, unit + ".conv1", x, k3, gc));
      y = conv_norm(p, unit + ".conv2", y, k3, gc);
      const Var<T> shortcut = x.shape().c != widths[s] ? conv_norm(p, unit + ".shortcut", x, k1, gc) : x;
      x = relu(add(y, shortcut));
    }
    skips.push_back(x);
  }

  x = multi_scale_block(x, config_.multiscale, p, "fusion.multiscale");
  x = dilated_block(x, config_.dilated, config_.multiscale.concat, p, "fusion.dilated");

  for (std::size_t s = widths.size() - 1; s-- > 0;) {
    x = upsample_bilinear(x, 2);
    if (config_.skip_connections) {
      const Var<T> parts[] = {x, skips[s]};
      x = concat_channels<T>(parts);
    }
    x = relu(conv_norm(p, "decoder.stage" + std::to_string(s) + ".conv", x, k3, gc));
  }
  const Var<T> depth = softplus(conv(p, "head.depth", x, k3));
  const Var<T> logits = conv(p, "head.logits", x, k1);
  return NetworkOutput<T>{depth, logits};
}

template <std::floating_point T>
NetworkOutput<T> DepthNetwork<T>::forward(Tape<T>& tape, const Tensor<T>& image) const {
  BoundParameters<T> bound(tape, params_, false);
  return forward(bound, tape.constant(image));
}

std::size_t receptive_field(std::span<const LayerGeometry> layers) {
  std::size_t rf = 1;
  std::size_t jump = 1;
  for (const auto& l : layers) {
    rf += (l.kernel - 1) * l.dilation * jump;
    jump *= l.stride;
  }
  return rf;
}

std::vector<LayerGeometry> trunk_geometry(const NetworkConfig& config) {
  config.validate();
  std::vector<LayerGeometry> layers;
  layers.push_back({3, 1, 1});
  for (std::size_t s = 0; s < config.backbone.stage_widths.size(); ++s) {
    if (s > 0) layers.push_back({2, 1, 2});
    for (std::size_t u = 0; u < config.backbone.units_per_stage; ++u) {
      layers.push_back({3, 1, 1});
      layers.push_back({3, 1, 1});
    }
  }
  const std::size_t widest_kernel =
      *std::max_element(config.multiscale.kernel_sizes.begin(), config.multiscale.kernel_sizes.end());
  for (std::size_t r = 0; r < config.multiscale.repeats; ++r) {
    layers.push_back({widest_kernel, 1, 1});
    layers.push_back({1, 1, 1});
  }
  const auto rates = config.dilated.effective_rates();
  const std::size_t widest_rate = *std::max_element(rates.begin(), rates.end());
  for (std::size_t r = 0; r < config.dilated.repeats; ++r) {
    layers.push_back({config.dilated.kernel_size, widest_rate, 1});
    layers.push_back({1, 1, 1});
  }
  return layers;
}

std::size_t receptive_field(const NetworkConfig& config) {
  const auto layers = trunk_geometry(config);
  return receptive_field(layers);
}

template class Parameters<float>;
template class Parameters<double>;
template class BoundParameters<float>;
template class BoundParameters<double>;
template class DepthNetwork<float>;
template class DepthNetwork<double>;

template Parameters<float> initialize_parameters<float>(std::span<const ParamSpec>, std::uint64_t);
template Parameters<double> initialize_parameters<double>(std::span<const ParamSpec>, std::uint64_t);
template Var<float> multi_scale_block<float>(Var<float>, const MultiScaleBlockConfig&,
                                             const BoundParameters<float>&, std::string_view);
template Var<double> multi_scale_block<double>(Var<double>, const MultiScaleBlockConfig&,
                                               const BoundParameters<double>&, std::string_view);
template Var<float> dilated_block<float>(Var<float>, const DilatedBlockConfig&, bool,
                                         const BoundParameters<float>&, std::string_view);
template Var<double> dilated_block<double>(Var<double>, const DilatedBlockConfig&, bool,
                                           const BoundParameters<double>&, std::string_view);

}  // namespace depthfuse
