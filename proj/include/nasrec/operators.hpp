#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nasrec/kernels.hpp"

namespace nasrec {

// Dense operators emit B x dim tensors, sparse operators emit B x rows x dim_s.
enum class OperatorKind { kFC, kGating, kSum, kDotProduct, kEmbedFC, kAttention };

inline constexpr OperatorKind kAllOperators[] = {
    OperatorKind::kFC,         OperatorKind::kGating,  OperatorKind::kSum,
    OperatorKind::kDotProduct, OperatorKind::kEmbedFC, OperatorKind::kAttention};

bool is_dense(OperatorKind kind);
inline bool is_sparse(OperatorKind kind) { return !is_dense(kind); }
const char* to_string(OperatorKind kind);
OperatorKind parse_operator_kind(std::string_view name);

enum class MaskAxis { kLast, kMiddle };

// Keeps positions [0, d) along the axis and zeroes the rest.
template <typename Real>
NodeId apply_dim_mask(Graph<Real>& g, NodeId v, std::size_t d, MaskAxis axis);

// A linear map over several inputs whose concatenation is the logical
// operand: sum_i inputs[i] * weights[i] + bias. Keeping one weight block per
// input lets absent inputs drop out without re-laying-out the weights.
struct SourcedLinear {
  std::vector<NodeId> inputs;
  std::vector<NodeId> weights;
  std::optional<NodeId> bias;
};

template <typename Real>
NodeId apply_linear(Graph<Real>& g, const SourcedLinear& lin);

// Same, along the middle axis of 3-D inputs (EmbedFC form).
template <typename Real>
NodeId apply_middim_linear(Graph<Real>& g, const SourcedLinear& lin);

// Second operand of Gating/Sum: used as-is, or passed through a projection.
using Operand = std::variant<NodeId, SourcedLinear>;

template <typename Real>
NodeId resolve(Graph<Real>& g, const Operand& operand);

// relu(X W + b)
template <typename Real>
NodeId op_fc(Graph<Real>& g, const SourcedLinear& fc);

// sigmoid(FC(X1)) * X2
template <typename Real>
NodeId op_gating(Graph<Real>& g, const SourcedLinear& gate, const Operand& x2);

// X1 + X2
template <typename Real>
NodeId op_sum(Graph<Real>& g, NodeId x1, const Operand& x2);

// floor(sqrt(2 * dim_d)): number of rows the balanced Dot-Product projects to.
std::size_t dot_product_projection_target(std::size_t dense_dim);

struct DotProductConfig {
  bool balanced = true;
  std::size_t projection_target = 0;
};

struct DotProductParams {
  // Dense operand projected to one embedding row of width dim_s.
  std::optional<SourcedLinear> dense;
  // Sparse operand pieces, each B x rows_i x dim_s, stacked after the dense row.
  std::vector<NodeId> sparse;
  // Balanced mode only: one (rows_i x target) weight per stacked piece,
  // dense row first, plus a bias of length target.
  std::vector<NodeId> row_weights;
  std::optional<NodeId> row_bias;
  // Interaction head: pairs x out_dim.
  NodeId head_weight;
  std::optional<NodeId> head_bias;
};

// Stacks the dense row with the sparse rows, optionally projects the row
// count (balanced mode), and maps the strictly-upper-triangular pairwise inner
// products through a linear head (no activation).
template <typename Real>
NodeId op_dot_product(Graph<Real>& g, const DotProductParams& p, const DotProductConfig& cfg);

// FC along the middle axis: B x N_in x dim_s -> B x N_out x dim_s.
template <typename Real>
NodeId op_embed_fc(Graph<Real>& g, const SourcedLinear& efc);

// softmax(X X^T / sqrt(dim_s)) X per batch element. With active_rows, keys
// outside the set get zero weight and inactive query rows output zero.
template <typename Real>
NodeId op_attention(Graph<Real>& g, NodeId x, std::span<const std::uint8_t> active_rows = {});

// Appends the projected dense output as one extra embedding row.
template <typename Real>
NodeId project_concatenate(Graph<Real>& g, NodeId y_s, const SourcedLinear& projection);

// Weight counts of a Dot-Product over `rows` stacked embeddings feeding a
// dense output of `dense_dim` (biases excluded / listed separately).
struct DotProductWeightCount {
  std::uint64_t row_projection = 0;
  std::uint64_t interaction_head = 0;
  std::uint64_t biases = 0;
  std::uint64_t weights() const { return row_projection + interaction_head; }
};

DotProductWeightCount dot_product_weight_count(std::uint64_t rows, std::uint64_t dense_dim,
                                               bool balanced);

}  // namespace nasrec
