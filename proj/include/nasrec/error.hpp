#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace nasrec {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by kernels when operand shapes are incompatible.
class ShapeError : public Error {
 public:
  ShapeError(const std::string& kernel, const std::vector<std::size_t>& lhs,
             const std::vector<std::size_t>& rhs);

  const std::string& kernel() const { return kernel_; }

 private:
  std::string kernel_;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

}  // namespace nasrec
