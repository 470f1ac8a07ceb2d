#include "nasrec/graph.hpp"

namespace nasrec {

template <typename Real>
NodeId Graph<Real>::push(Tensor<Real> value, bool requires_grad, Backward backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad && grad_enabled_;
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename Real>
NodeId Graph<Real>::constant(Tensor<Real> value) {
  return push(std::move(value), false, nullptr);
}

template <typename Real>
NodeId Graph<Real>::leaf(Tensor<Real> value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

template <typename Real>
NodeId Graph<Real>::parameter(Parameter<Real>& param) {
  Node node;
  node.param = &param;
  node.requires_grad = param.trainable && grad_enabled_;
  nodes_.push_back(std::move(node));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename Real>
const Tensor<Real>& Graph<Real>::value(NodeId id) const {
  const Node& n = nodes_.at(id.index);
  return n.param ? n.param->value : n.value;
}

template <typename Real>
Tensor<Real>& Graph<Real>::grad(NodeId id) {
  Node& n = nodes_.at(id.index);
  if (n.param) {
    n.param->touched = true;
    return n.param->grad;
  }
  if (n.grad.empty()) n.grad = Tensor<Real>(n.value.shape());
  return n.grad;
}

template <typename Real>
bool Graph<Real>::has_grad(NodeId id) const {
  const Node& n = nodes_.at(id.index);
  return n.param ? n.param->touched : !n.grad.empty();
}

template <typename Real>
bool Graph<Real>::any_requires_grad(std::initializer_list<NodeId> ids) const {
  for (auto id : ids) {
    if (nodes_.at(id.index).requires_grad) return true;
  }
  return false;
}

template <typename Real>
void Graph<Real>::backward(NodeId loss) {
  if (value(loss).size() != 1) {
    throw Error("backward: loss must be a scalar, got shape " +
                shape_to_string(value(loss).shape()));
  }
  if (!grad_enabled_) throw Error("backward: graph was built with gradients disabled");
  grad(loss)[0] += Real(1);
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.param) continue;
    if (n.grad.empty()) continue;  // unreachable from the loss
    n.backward(*this, NodeId{static_cast<std::uint32_t>(i)});
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace nasrec
