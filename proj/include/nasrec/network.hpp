#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nasrec/search_space.hpp"

namespace nasrec {

// One mini-batch of raw features, row-major.
struct Batch {
  std::size_t size = 0;
  std::span<const float> dense;          // size x num_dense
  std::span<const std::uint32_t> ids;    // size x num_sparse
  std::span<const float> labels;         // size
};

// Executable NASRec model: embeddings, a stack of choice blocks and a final
// FC producing one logit from the dense output of the last block.
//
// A supernet holds weights for every operator at the largest widths and
// runs any genotype by masking. A standalone network holds exactly the
// weights one genotype uses, sliced out of a supernet, and runs without
// masks. Both produce the same logits for the same genotype.
template <typename Real>
class Network {
 public:
  // Fresh supernet. embedding_cap = 0 keeps full-size tables.
  Network(const SupernetConfig& cfg, std::uint64_t seed, std::uint64_t embedding_cap);

  Network(const Network& other) { *this = other; }
  Network(Network&& other) noexcept { *this = std::move(other); }
  Network& operator=(const Network& other);
  Network& operator=(Network&& other) noexcept;

  // Copies the weights `g` uses into a standalone network.
  Network extract_subnet(const Genotype& g) const;

  // Supernet mode: logits (B x 1) of `g` evaluated with masked shared weights.
  NodeId forward(Graph<Real>& graph, const Batch& batch, const Genotype& g);
  // Standalone mode: logits of the network's own genotype.
  NodeId forward(Graph<Real>& graph, const Batch& batch);

  bool is_standalone() const { return standalone_; }
  const Genotype& genotype() const;
  const SupernetConfig& config() const { return cfg_; }
  std::uint64_t embedding_cap() const { return embedding_cap_; }
  ParamStore<Real>& params() { return params_; }
  const ParamStore<Real>& params() const { return params_; }

  // Head parameters, the only ones fine-tuning updates.
  static bool is_head(const Parameter<Real>& p);

  template <typename Other>
  Network<Other> cast() const;

 private:
  Network() = default;
  template <typename>
  friend class Network;

  void init_supernet(std::uint64_t seed);
  void bind_tables();
  NodeId run(Graph<Real>& graph, const Batch& batch, const Genotype& g);

  SupernetConfig cfg_;
  std::uint64_t embedding_cap_ = 0;
  bool standalone_ = false;
  Genotype genotype_;
  ParamStore<Real> params_;
  std::vector<Parameter<Real>*> tables_;
};

// Rows of source `s` as seen by block inputs: the supernet keeps a fixed
// slot per row, the standalone form keeps only rows the genotype produces.
std::size_t supernet_sparse_rows(const SupernetConfig& cfg, std::size_t source);
std::size_t supernet_dense_width(const SupernetConfig& cfg, std::size_t source);

template <typename Real>
template <typename Other>
Network<Other> Network<Real>::cast() const {
  Network<Other> out;
  out.cfg_ = cfg_;
  out.embedding_cap_ = embedding_cap_;
  out.standalone_ = standalone_;
  out.genotype_ = genotype_;
  out.params_ = params_.template cast<Other>();
  out.bind_tables();
  return out;
}

extern template class Network<float>;
extern template class Network<double>;

}  // namespace nasrec
