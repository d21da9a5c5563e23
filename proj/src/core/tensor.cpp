#include "occaug/core/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "occaug/core/error.hpp"

namespace occaug {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (shape_[i] == 0) {
      throw ShapeError("tensor dimension " + std::to_string(i) +
                       " must be positive, got shape " +
                       shape_to_string(shape_));
    }
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_to_string(shape_) + " holds " +
                     std::to_string(shape_numel(shape_)) +
                     " elements but data has " + std::to_string(data_.size()));
  }
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) +
                     " out of range for shape " + shape_to_string(shape_));
  }
  return shape_[axis];
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), T{0});
  return grad_;
}

template <typename T>
void Tensor<T>::zero_grad() {
  grad_.assign(data_.size(), T{0});
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
  for (T v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(T)) == 0;
}

template class Tensor<float>;
template class Tensor<double>;
template bool bit_equal(const Tensor<float>&, const Tensor<float>&);
template bool bit_equal(const Tensor<double>&, const Tensor<double>&);

}  // namespace occaug
