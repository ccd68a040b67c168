#include "depthfuse/tensor.hpp"

#include "depthfuse/error.hpp"

namespace depthfuse {

std::string Shape::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
         std::to_string(w);
}

template <std::floating_point T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(shape), data_(shape.numel(), fill) {}

template <std::floating_point T>
Tensor<T>::Tensor(Shape shape, std::span<const T> data) : shape_(shape), data_(data.begin(), data.end()) {
  if (data_.size() != shape_.numel()) {
    throw ConfigError("tensor of shape " + shape_.str() + " needs " +
                      std::to_string(shape_.numel()) + " elements, got " +
                      std::to_string(data_.size()));
  }
}

template <std::floating_point T>
T Tensor<T>::item() const {
  if (data_.size() != 1) {
    throw UsageError("item() on tensor of shape " + shape_.str());
  }
  return data_[0];
}

template <std::floating_point T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel()) {
    throw ConfigError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(shape, data_);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace depthfuse
