#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "nasrec/params.hpp"
#include "nasrec/tensor.hpp"

namespace nasrec {

struct NodeId {
  std::uint32_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the node list
// is already a topological order and backward() walks it once in reverse.
// A graph and the tensors it owns belong to one thread.
template <typename Real>
class Graph {
 public:
  using Backward = std::function<void(Graph&, NodeId)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  NodeId constant(Tensor<Real> value);
  NodeId leaf(Tensor<Real> value, bool requires_grad = true);
  // Aliases the parameter's storage; gradients accumulate into param.grad.
  NodeId parameter(Parameter<Real>& param);

  const Tensor<Real>& value(NodeId id) const;
  const Shape& shape(NodeId id) const { return value(id).shape(); }
  bool requires_grad(NodeId id) const { return nodes_[id.index].requires_grad; }

  // Gradient buffer of a node, allocated (zero) on first access.
  Tensor<Real>& grad(NodeId id);
  bool has_grad(NodeId id) const;

  // Seeds d(loss)/d(loss) = 1 and propagates to every requires_grad node.
  void backward(NodeId loss);

  std::size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

  // Kernel-author interface.
  NodeId push(Tensor<Real> value, bool requires_grad, Backward backward);
  bool any_requires_grad(std::initializer_list<NodeId> ids) const;

  // Floating-point operation counter (see kernels.hpp for the convention).
  std::uint64_t flops() const { return flops_; }
  void add_flops(std::uint64_t n) { flops_ += n; }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    Parameter<Real>* param = nullptr;
    bool requires_grad = false;
    Backward backward;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_;
  std::uint64_t flops_ = 0;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace nasrec
