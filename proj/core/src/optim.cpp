#include "depthfuse/optim.hpp"

#include <cmath>
#include <string>

#include "depthfuse/error.hpp"

namespace depthfuse {
namespace {

template <std::floating_point T>
void check_grads(const Parameters<T>& params, std::span<const Tensor<T>> grads) {
  if (grads.size() != params.size()) {
    throw ConfigError("optimizer: " + std::to_string(grads.size()) + " gradients for " +
                      std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape()) {
      throw ConfigError("optimizer: gradient shape " + grads[i].shape().str() + " does not match " +
                        params.name(i) + " " + params[i].shape().str());
    }
  }
}

template <std::floating_point T>
Tensor<T>& slot(OptimizerState<T>& state, const std::string& name, const Shape& shape) {
  if (auto i = state.slots.find(name)) {
    if (state.slots[*i].shape() != shape) throw ConfigError("optimizer state slot " + name + " has wrong shape");
    return state.slots[*i];
  }
  state.slots.add(name, Tensor<T>(shape));
  return state.slots.at(name);
}

}  // namespace

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd_momentum";
}

OptimizerKind parse_optimizer_kind(std::string_view text) {
  if (text == "adam") return OptimizerKind::kAdam;
  if (text == "sgd_momentum") return OptimizerKind::kSgdMomentum;
  throw ConfigError("unknown optimizer kind '" + std::string(text) + "' (expected adam or sgd_momentum)");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("optimizer.learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer.momentum must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("optimizer.beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("optimizer.epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay must be non-negative");
  if (batch_size < 1) throw ConfigError("optimizer.batch_size must be at least 1");
}

template <std::floating_point T>
void adam_step(Parameters<T>& params, std::span<const Tensor<T>> grads, OptimizerState<T>& state,
               const OptimizerConfig& config) {
  config.validate();
  check_grads(params, grads);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T lr = static_cast<T>(config.learning_rate);
  const T decay = static_cast<T>(config.learning_rate * config.weight_decay);
  const T b1 = static_cast<T>(config.momentum), b2 = static_cast<T>(config.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(config.momentum, t));
  const T c2 = static_cast<T>(1.0 - std::pow(config.beta2, t));
  const T eps = static_cast<T>(config.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.name(i);
    const Shape shape = params[i].shape();
    auto theta = params[i].data();
    auto m = slot(state, "m/" + name, shape).data();
    auto v = slot(state, "v/" + name, shape).data();
    auto g = grads[i].data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      theta[k] -= decay * theta[k];
      m[k] = b1 * m[k] + (T{1} - b1) * g[k];
      v[k] = b2 * v[k] + (T{1} - b2) * g[k] * g[k];
      const T m_hat = m[k] / c1;
      const T v_hat = v[k] / c2;
      theta[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <std::floating_point T>
void sgd_momentum_step(Parameters<T>& params, std::span<const Tensor<T>> grads,
                       OptimizerState<T>& state, const OptimizerConfig& config) {
  config.validate();
  check_grads(params, grads);
  ++state.step;
  const T lr = static_cast<T>(config.learning_rate);
  const T decay = static_cast<T>(config.learning_rate * config.weight_decay);
  const T mu = static_cast<T>(config.momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].data();
    auto vel = slot(state, "velocity/" + params.name(i), params[i].shape()).data();
    auto g = grads[i].data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      vel[k] = mu * vel[k] + g[k];
      theta[k] = theta[k] - lr * vel[k] - decay * theta[k];
    }
  }
}

template <std::floating_point T>
void optimizer_step(Parameters<T>& params, std::span<const Tensor<T>> grads, OptimizerState<T>& state,
                    const OptimizerConfig& config) {
  if (config.kind == OptimizerKind::kAdam) {
    adam_step(params, grads, state, config);
  } else {
    sgd_momentum_step(params, grads, state, config);
  }
}

#define DEPTHFUSE_INSTANTIATE(T)                                                                 \
  template void adam_step<T>(Parameters<T>&, std::span<const Tensor<T>>, OptimizerState<T>&,     \
                             const OptimizerConfig&);                                            \
  template void sgd_momentum_step<T>(Parameters<T>&, std::span<const Tensor<T>>,                 \
                                     OptimizerState<T>&, const OptimizerConfig&);                \
  template void optimizer_step<T>(Parameters<T>&, std::span<const Tensor<T>>, OptimizerState<T>&, \
                                  const OptimizerConfig&);

DEPTHFUSE_INSTANTIATE(float)
DEPTHFUSE_INSTANTIATE(double)

#undef DEPTHFUSE_INSTANTIATE

}  // namespace depthfuse
