#include "nasrec/operators.hpp"

#include <cmath>

namespace nasrec {

bool is_dense(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::kFC:
    case OperatorKind::kGating:
    case OperatorKind::kSum:
    case OperatorKind::kDotProduct:
      return true;
    case OperatorKind::kEmbedFC:
    case OperatorKind::kAttention:
      return false;
  }
  return false;
}

const char* to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::kFC: return "FC";
    case OperatorKind::kGating: return "Gating";
    case OperatorKind::kSum: return "Sum";
    case OperatorKind::kDotProduct: return "DotProduct";
    case OperatorKind::kEmbedFC: return "EmbedFC";
    case OperatorKind::kAttention: return "Attention";
  }
  return "?";
}

OperatorKind parse_operator_kind(std::string_view name) {
  for (auto kind : kAllOperators) {
    if (name == to_string(kind)) return kind;
  }
  throw Error("unknown operator kind '" + std::string(name) + "'");
}

template <typename Real>
NodeId apply_dim_mask(Graph<Real>& g, NodeId v, std::size_t d, MaskAxis axis) {
  const auto& V = g.value(v);
  std::size_t ax = 0;
  if (axis == MaskAxis::kLast) {
    if (V.rank() != 2) throw ShapeError("apply_dim_mask", V.shape(), {d});
    ax = 1;
  } else {
    if (V.rank() != 3) throw ShapeError("apply_dim_mask", V.shape(), {d});
    ax = 1;
  }
  const std::size_t extent = V.dim(ax);
  if (d < 1 || d > extent) {
    throw Error("apply_dim_mask: d=" + std::to_string(d) + " outside [1, " +
                std::to_string(extent) + "]");
  }
  std::vector<std::uint8_t> keep(extent, 0);
  std::fill_n(keep.begin(), d, 1);
  return mask(g, v, ax, keep);
}

template <typename Real>
NodeId apply_linear(Graph<Real>& g, const SourcedLinear& lin) {
  if (lin.inputs.empty() || lin.inputs.size() != lin.weights.size()) {
    throw Error("apply_linear: need one weight per input");
  }
  std::vector<NodeId> terms;
  for (std::size_t i = 0; i < lin.inputs.size(); ++i) {
    terms.push_back(linear(g, lin.inputs[i], lin.weights[i], i == 0 ? lin.bias : std::nullopt));
  }
  return terms.size() == 1 ? terms[0] : add_n<Real>(g, terms);
}

template <typename Real>
NodeId apply_middim_linear(Graph<Real>& g, const SourcedLinear& lin) {
  if (lin.inputs.empty() || lin.inputs.size() != lin.weights.size()) {
    throw Error("apply_middim_linear: need one weight per input");
  }
  std::vector<NodeId> terms;
  for (std::size_t i = 0; i < lin.inputs.size(); ++i) {
    terms.push_back(
        middim_linear(g, lin.inputs[i], lin.weights[i], i == 0 ? lin.bias : std::nullopt));
  }
  return terms.size() == 1 ? terms[0] : add_n<Real>(g, terms);
}

template <typename Real>
NodeId resolve(Graph<Real>& g, const Operand& operand) {
  if (const auto* id = std::get_if<NodeId>(&operand)) return *id;
  return apply_linear(g, std::get<SourcedLinear>(operand));
}

template <typename Real>
NodeId op_fc(Graph<Real>& g, const SourcedLinear& fc) {
  return relu(g, apply_linear(g, fc));
}

template <typename Real>
NodeId op_gating(Graph<Real>& g, const SourcedLinear& gate, const Operand& x2) {
  const NodeId gate_out = sigmoid(g, apply_linear(g, gate));
  return elementwise_mul(g, gate_out, resolve(g, x2));
}

template <typename Real>
NodeId op_sum(Graph<Real>& g, NodeId x1, const Operand& x2) {
  return add(g, x1, resolve(g, x2));
}

std::size_t dot_product_projection_target(std::size_t dense_dim) {
  auto t = static_cast<std::size_t>(std::sqrt(2.0 * static_cast<double>(dense_dim)));
  // Guard against sqrt rounding on perfect squares.
  while ((t + 1) * (t + 1) <= 2 * dense_dim) ++t;
  while (t * t > 2 * dense_dim) --t;
  return std::max<std::size_t>(t, 2);
}

template <typename Real>
NodeId op_dot_product(Graph<Real>& g, const DotProductParams& p, const DotProductConfig& cfg) {
  std::vector<NodeId> pieces;
  if (p.dense) pieces.push_back(unsqueeze_middle(g, apply_linear(g, *p.dense)));
  pieces.insert(pieces.end(), p.sparse.begin(), p.sparse.end());
  if (pieces.empty()) throw Error("op_dot_product: both dense and sparse inputs are absent");

  NodeId stacked;
  if (cfg.balanced) {
    if (p.row_weights.size() != pieces.size()) {
      throw Error("op_dot_product: balanced mode needs one row weight per stacked piece");
    }
    stacked = apply_middim_linear(g, SourcedLinear{pieces, p.row_weights, p.row_bias});
  } else {
    stacked = pieces.size() == 1 ? pieces[0] : concat_middim<Real>(g, pieces);
  }
  const NodeId gram = batched_matmul(g, stacked, stacked, /*transpose_b=*/true);
  return linear(g, triu_flatten(g, gram), p.head_weight, p.head_bias);
}

template <typename Real>
NodeId op_embed_fc(Graph<Real>& g, const SourcedLinear& efc) {
  return apply_middim_linear(g, efc);
}

template <typename Real>
NodeId op_attention(Graph<Real>& g, NodeId x, std::span<const std::uint8_t> active_rows) {
  const auto& X = g.value(x);
  if (X.rank() != 3) throw ShapeError("op_attention", X.shape(), {});
  const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(X.dim(2)));
  const NodeId logits = scale(g, batched_matmul(g, x, x, /*transpose_b=*/true), inv_sqrt);
  const NodeId weights = softmax_lastdim(g, logits, active_rows);
  const NodeId out = batched_matmul(g, weights, x);
  if (active_rows.empty()) return out;
  return mask(g, out, 1, active_rows);
}

template <typename Real>
NodeId project_concatenate(Graph<Real>& g, NodeId y_s, const SourcedLinear& projection) {
  const NodeId row = unsqueeze_middle(g, apply_linear(g, projection));
  const NodeId parts[] = {y_s, row};
  return concat_middim<Real>(g, parts);
}

DotProductWeightCount dot_product_weight_count(std::uint64_t rows, std::uint64_t dense_dim,
                                               bool balanced) {
  DotProductWeightCount c;
  if (balanced) {
    const std::uint64_t t = dot_product_projection_target(dense_dim);
    c.row_projection = rows * t;
    c.interaction_head = t * (t - 1) / 2 * dense_dim;
    c.biases = t + dense_dim;
  } else {
    c.interaction_head = rows * (rows - 1) / 2 * dense_dim;
    c.biases = dense_dim;
  }
  return c;
}

#define NASREC_INSTANTIATE_OPERATORS(R)                                                   \
  template NodeId apply_dim_mask<R>(Graph<R>&, NodeId, std::size_t, MaskAxis);           \
  template NodeId apply_linear<R>(Graph<R>&, const SourcedLinear&);                      \
  template NodeId apply_middim_linear<R>(Graph<R>&, const SourcedLinear&);               \
  template NodeId resolve<R>(Graph<R>&, const Operand&);                                 \
  template NodeId op_fc<R>(Graph<R>&, const SourcedLinear&);                             \
  template NodeId op_gating<R>(Graph<R>&, const SourcedLinear&, const Operand&);         \
  template NodeId op_sum<R>(Graph<R>&, NodeId, const Operand&);                          \
  template NodeId op_dot_product<R>(Graph<R>&, const DotProductParams&,                  \
                                    const DotProductConfig&);                            \
  template NodeId op_embed_fc<R>(Graph<R>&, const SourcedLinear&);                       \
  template NodeId op_attention<R>(Graph<R>&, NodeId, std::span<const std::uint8_t>);     \
  template NodeId project_concatenate<R>(Graph<R>&, NodeId, const SourcedLinear&);

NASREC_INSTANTIATE_OPERATORS(float)
NASREC_INSTANTIATE_OPERATORS(double)

}  // namespace nasrec
