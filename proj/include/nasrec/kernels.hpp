#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nasrec/graph.hpp"

// Differentiable kernels. Every function appends one node to the graph and
// throws ShapeError on incompatible operands.
//
// FLOP convention (shared with search_space flop_count): one multiply-add is
// two FLOPs; matrix products count 2*M*K*N per batch element; softmax counts
// 3 per element; layer norm counts 7 per normalized element; bias adds,
// activations, masks and data movement are free.

namespace nasrec {

inline constexpr std::uint64_t kSoftmaxFlopsPerElement = 3;
inline constexpr std::uint64_t kLayerNormFlopsPerElement = 7;

// x: B x K, w: K x N, b: N  ->  B x N
template <typename Real>
NodeId linear(Graph<Real>& g, NodeId x, NodeId w, std::optional<NodeId> b = std::nullopt);

template <typename Real>
NodeId relu(Graph<Real>& g, NodeId x);

template <typename Real>
NodeId sigmoid(Graph<Real>& g, NodeId x);

// Softmax over the last axis. Positions whose key_mask entry is 0 receive
// probability exactly 0; at least one position must be unmasked.
template <typename Real>
NodeId softmax_lastdim(Graph<Real>& g, NodeId x,
                       std::span<const std::uint8_t> key_mask = {});

// Normalizes the first `active` entries of the last axis (all when 0) with
// learned scale/shift; entries past `active` are written as zero.
template <typename Real>
NodeId layer_norm(Graph<Real>& g, NodeId x, NodeId gamma, NodeId beta,
                  std::size_t active = 0, Real eps = Real(1e-5));

template <typename Real>
NodeId concat_lastdim(Graph<Real>& g, std::span<const NodeId> parts);

// 3-D tensors concatenated along the middle (row) axis.
template <typename Real>
NodeId concat_middim(Graph<Real>& g, std::span<const NodeId> parts);

template <typename Real>
NodeId add(Graph<Real>& g, NodeId a, NodeId b);

template <typename Real>
NodeId add_n(Graph<Real>& g, std::span<const NodeId> terms);

template <typename Real>
NodeId elementwise_mul(Graph<Real>& g, NodeId a, NodeId b);

template <typename Real>
NodeId scale(Graph<Real>& g, NodeId x, Real factor);

// a: B x M x K, b: B x K x N (or B x N x K when transpose_b)  ->  B x M x N
template <typename Real>
NodeId batched_matmul(Graph<Real>& g, NodeId a, NodeId b, bool transpose_b = false);

// Zeroes positions along `axis` (1 = last axis of a 2-D tensor or middle axis
// of a 3-D tensor, 2 = last axis of a 3-D tensor) whose keep entry is 0.
template <typename Real>
NodeId mask(Graph<Real>& g, NodeId x, std::size_t axis, std::span<const std::uint8_t> keep);

// B x k x k  ->  B x k(k-1)/2, strictly upper triangle in row-major order.
template <typename Real>
NodeId triu_flatten(Graph<Real>& g, NodeId x);

// FC along the middle axis. x: B x Nin x D, w: Nin x Nout, b: Nout  ->  B x Nout x D
template <typename Real>
NodeId middim_linear(Graph<Real>& g, NodeId x, NodeId w, std::optional<NodeId> b = std::nullopt);

template <typename Real>
NodeId slice_middim(Graph<Real>& g, NodeId x, std::size_t begin, std::size_t end);

// Zero-pads or truncates the last axis of a 2-D tensor to `width`.
template <typename Real>
NodeId resize_lastdim(Graph<Real>& g, NodeId x, std::size_t width);

// Zero-pads or truncates the middle axis of a 3-D tensor to `rows`.
template <typename Real>
NodeId resize_middim(Graph<Real>& g, NodeId x, std::size_t rows);

// B x D  ->  B x 1 x D
template <typename Real>
NodeId unsqueeze_middle(Graph<Real>& g, NodeId x);

// ids: B x F row-major; field f reads tables[f] at row ids[b*F+f] mod rows.
// Returns B x F x D.
template <typename Real>
NodeId embedding_lookup(Graph<Real>& g, std::span<Parameter<Real>* const> tables,
                        std::span<const std::uint32_t> ids, std::size_t batch);

template <typename Real>
NodeId sum_all(Graph<Real>& g, NodeId x);

// sum(x * weights) as a scalar; weights are a constant of x's shape.
template <typename Real>
NodeId weighted_sum(Graph<Real>& g, NodeId x, const Tensor<Real>& weights);

// Mean binary cross-entropy of sigmoid(logits) against 0/1 labels.
template <typename Real>
NodeId bce_with_logits(Graph<Real>& g, NodeId logits, std::span<const float> labels);

}  // namespace nasrec
