#include "nasrec/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace nasrec {

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

ShapeError::ShapeError(const std::string& kernel, const std::vector<std::size_t>& lhs,
                       const std::vector<std::size_t>& rhs)
    : Error(kernel + ": incompatible shapes " + shape_to_string(lhs) + " and " +
            shape_to_string(rhs)),
      kernel_(kernel) {}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, Real fill) : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 3) {
    throw Error("tensor rank must be 1, 2 or 3, got shape " + shape_to_string(shape_));
  }
  data_.assign(shape_size(shape_), fill);
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() || shape_.size() > 3) {
    throw Error("tensor rank must be 1, 2 or 3, got shape " + shape_to_string(shape_));
  }
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor", shape_, {data_.size()});
  }
}

template <typename Real>
void Tensor<Real>::fill(Real value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename Real>
void Tensor<Real>::reshape(Shape shape) {
  if (shape_size(shape) != data_.size()) throw ShapeError("reshape", shape_, shape);
  shape_ = std::move(shape);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace nasrec
