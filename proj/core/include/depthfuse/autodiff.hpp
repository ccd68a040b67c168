#pragma once

#include <concepts>
#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "depthfuse/tensor.hpp"

namespace depthfuse {

template <std::floating_point T>
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid as long as the
// tape is alive.
template <std::floating_point T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
};

// Reverse-mode tape. Nodes are appended in execution order; backward() walks
// them in exactly the reverse order, so every node's gradient is complete
// before its backward function runs.
template <std::floating_point T>
class Tape {
 public:
  // Receives the tape and the id of the node whose output gradient is ready.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> variable(Tensor<T> value);
  Var<T> record(Tensor<T> value, bool requires_grad, BackwardFn backward);

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient of the last backward() loss w.r.t. v; zeros if v did not
  // influence the loss.
  Tensor<T> grad(Var<T> v) const;

  void backward(Var<T> loss);

  // Used by backward functions.
  const Tensor<T>& value_of(std::size_t id) const { return nodes_[id].value; }
  const Tensor<T>& grad_of(std::size_t id) const { return *nodes_[id].grad; }
  // Zero-initialised on first access.
  Tensor<T>& grad_buffer(std::size_t id);

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace depthfuse
