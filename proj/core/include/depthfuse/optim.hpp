#pragma once

#include <concepts>
#include <cstdint>
#include <span>
#include <string_view>

#include "depthfuse/network.hpp"
#include "depthfuse/tensor.hpp"

namespace depthfuse {

enum class OptimizerKind { kAdam, kSgdMomentum };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view text);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-4;
  double momentum = 0.9;  // SGD momentum, or Adam beta1
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Decoupled: applied to the parameters, not folded into the gradient.
  double weight_decay = 4e-4;
  std::size_t batch_size = 8;

  void validate() const;
};

// Per-parameter slots named "m/<param>", "v/<param>" (Adam) or
// "velocity/<param>" (SGD). Created on the first step.
template <std::floating_point T>
struct OptimizerState {
  Parameters<T> slots;
  std::uint64_t step = 0;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

// theta <- theta - lr*wd*theta, then the bias-corrected Adam step.
template <std::floating_point T>
void adam_step(Parameters<T>& params, std::span<const Tensor<T>> grads, OptimizerState<T>& state,
               const OptimizerConfig& config);

// v <- mu*v + g; theta <- theta - lr*v - lr*wd*theta.
template <std::floating_point T>
void sgd_momentum_step(Parameters<T>& params, std::span<const Tensor<T>> grads,
                       OptimizerState<T>& state, const OptimizerConfig& config);

template <std::floating_point T>
void optimizer_step(Parameters<T>& params, std::span<const Tensor<T>> grads, OptimizerState<T>& state,
                    const OptimizerConfig& config);

}  // namespace depthfuse
