#include "depthfuse/autodiff.hpp"

#include "depthfuse/error.hpp"

namespace depthfuse {

template <std::floating_point T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  return record(std::move(value), false, nullptr);
}

template <std::floating_point T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  return record(std::move(value), true, nullptr);
}

template <std::floating_point T>
Var<T> Tape<T>::record(Tensor<T> value, bool requires_grad, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), std::nullopt, requires_grad, std::move(backward)});
  return Var<T>{this, nodes_.size() - 1};
}

template <std::floating_point T>
Tensor<T> Tape<T>::grad(Var<T> v) const {
  const Node& node = nodes_.at(v.id);
  if (node.grad) return *node.grad;
  return Tensor<T>(node.value.shape());
}

template <std::floating_point T>
Tensor<T>& Tape<T>::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.grad) node.grad.emplace(node.value.shape());
  return *node.grad;
}

template <std::floating_point T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw UsageError("backward: loss belongs to another tape");
  const Node& root = nodes_.at(loss.id);
  if (!root.value.is_scalar()) {
    throw UsageError("backward: loss must be a scalar, got shape " + root.value.shape().str());
  }
  for (Node& node : nodes_) node.grad.reset();
  if (!root.requires_grad) return;
  grad_buffer(loss.id).data()[0] = T{1};
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.requires_grad && node.grad && node.backward) node.backward(*this, i);
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace depthfuse
