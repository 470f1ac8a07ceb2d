#include "nasrec/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nasrec/random.hpp"

namespace nasrec {
namespace {

const char* op_prefix(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::kFC: return "fc";
    case OperatorKind::kGating: return "gating";
    case OperatorKind::kSum: return "sum";
    case OperatorKind::kDotProduct: return "dp";
    case OperatorKind::kEmbedFC: return "embedfc";
    case OperatorKind::kAttention: return "attention";
  }
  return "?";
}

std::string block_prefix(std::size_t b, OperatorKind kind) {
  return "b" + std::to_string(b) + "." + op_prefix(kind) + ".";
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

std::size_t max_dim(const std::vector<OpChoice>& ops) {
  std::size_t m = 0;
  for (const auto& op : ops) m = std::max(m, op.dim);
  return m;
}

// Position of pair (i, j), i < j, in the row-major strict upper triangle of
// an n x n matrix.
std::size_t pair_index(std::size_t i, std::size_t j, std::size_t n) {
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

}  // namespace

std::size_t supernet_dense_width(const SupernetConfig& cfg, std::size_t source) {
  return source == 0 ? cfg.features.num_dense : cfg.max_dense_dim();
}

std::size_t supernet_sparse_rows(const SupernetConfig& cfg, std::size_t source) {
  if (source == 0) return cfg.features.num_sparse();
  return cfg.max_sparse_rows() + (cfg.allow_project_concat ? 1 : 0);
}

template <typename Real>
Network<Real>::Network(const SupernetConfig& cfg, std::uint64_t seed, std::uint64_t embedding_cap)
    : cfg_(cfg), embedding_cap_(embedding_cap) {
  check_config(cfg_);
  init_supernet(seed);
  bind_tables();
}

template <typename Real>
Network<Real>& Network<Real>::operator=(const Network& other) {
  if (this == &other) return *this;
  cfg_ = other.cfg_;
  embedding_cap_ = other.embedding_cap_;
  standalone_ = other.standalone_;
  genotype_ = other.genotype_;
  params_ = other.params_;
  bind_tables();
  return *this;
}

template <typename Real>
Network<Real>& Network<Real>::operator=(Network&& other) noexcept {
  cfg_ = std::move(other.cfg_);
  embedding_cap_ = other.embedding_cap_;
  standalone_ = other.standalone_;
  genotype_ = std::move(other.genotype_);
  params_ = std::move(other.params_);
  tables_ = std::move(other.tables_);
  return *this;
}

template <typename Real>
void Network<Real>::init_supernet(std::uint64_t seed) {
  Rng rng(seed);
  const auto& f = cfg_.features;
  const std::size_t ds = f.embedding_dim;
  const std::size_t dmax = cfg_.max_dense_dim();
  const std::size_t nmax = cfg_.max_sparse_rows();

  auto uniform = [&](const std::string& name, ParamKind kind, Shape shape, double bound) {
    Tensor<Real> t(std::move(shape));
    for (auto& v : t.vec()) v = static_cast<Real>((2.0 * uniform_real(rng) - 1.0) * bound);
    params_.add(name, kind, std::move(t));
  };
  auto glorot = [&](const std::string& name, std::size_t rows, std::size_t cols,
                    std::size_t fan_in, std::size_t fan_out) {
    uniform(name, ParamKind::kWeight, {rows, cols},
            std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
  };
  auto bias = [&](const std::string& name, std::size_t n) {
    params_.add(name, ParamKind::kBias, Tensor<Real>({n}));
  };
  auto norm = [&](const std::string& prefix, std::size_t n) {
    params_.add(prefix + "ln_g", ParamKind::kNorm, Tensor<Real>({n}, Real(1)));
    params_.add(prefix + "ln_b", ParamKind::kNorm, Tensor<Real>({n}));
  };

  for (std::size_t i = 0; i < f.num_sparse(); ++i) {
    std::uint64_t rows = f.vocab_sizes[i];
    if (embedding_cap_) rows = std::min(rows, embedding_cap_);
    uniform("emb." + std::to_string(i), ParamKind::kEmbedding, {rows, ds},
            1.0 / std::sqrt(static_cast<double>(ds)));
  }

  for (std::size_t b = 1; b <= cfg_.num_blocks; ++b) {
    std::size_t dense_in = 0, sparse_in = 0;
    for (std::size_t s = 0; s < b; ++s) {
      dense_in += supernet_dense_width(cfg_, s);
      sparse_in += supernet_sparse_rows(cfg_, s);
    }
    auto per_source_dense = [&](const std::string& name, std::size_t cols) {
      for (std::size_t s = 0; s < b; ++s) {
        glorot(name + std::to_string(s), supernet_dense_width(cfg_, s), cols, dense_in, cols);
      }
    };
    auto per_source_sparse = [&](const std::string& name, std::size_t cols, std::size_t fan_in) {
      for (std::size_t s = 0; s < b; ++s) {
        glorot(name + std::to_string(s), supernet_sparse_rows(cfg_, s), cols, fan_in, cols);
      }
    };

    for (auto kind : cfg_.dense_ops) {
      const std::string pre = block_prefix(b, kind);
      switch (kind) {
        case OperatorKind::kFC:
          per_source_dense(pre + "w", dmax);
          bias(pre + "b", dmax);
          break;
        case OperatorKind::kGating:
          per_source_dense(pre + "wg", dmax);
          bias(pre + "bg", dmax);
          per_source_dense(pre + "wp", dmax);
          bias(pre + "bp", dmax);
          break;
        case OperatorKind::kSum:
          per_source_dense(pre + "wp", dmax);
          bias(pre + "bp", dmax);
          break;
        case OperatorKind::kDotProduct: {
          per_source_dense(pre + "wd", ds);
          bias(pre + "bd", ds);
          const std::size_t rows = 1 + sparse_in;
          std::size_t pairs = 0;
          if (cfg_.balanced_dot_product) {
            const std::size_t t = dot_product_projection_target(dmax);
            glorot(pre + "wr_dense", 1, t, rows, t);
            per_source_sparse(pre + "wr", t, rows);
            bias(pre + "br", t);
            pairs = t * (t - 1) / 2;
          } else {
            pairs = rows * (rows - 1) / 2;
          }
          glorot(pre + "wo", pairs, dmax, pairs, dmax);
          bias(pre + "bo", dmax);
          break;
        }
        default:
          break;
      }
      if (cfg_.layer_norm) norm(pre, dmax);
    }
    for (auto kind : cfg_.sparse_ops) {
      const std::string pre = block_prefix(b, kind);
      per_source_sparse(pre + "w", nmax, sparse_in);
      bias(pre + "b", nmax);
      if (cfg_.layer_norm) norm(pre, ds);
    }
    if (cfg_.allow_project_concat) {
      const std::string pre = "b" + std::to_string(b) + ".pc.";
      glorot(pre + "w", dmax, ds, dmax, ds);
      bias(pre + "b", ds);
    }
  }
  glorot("head.w", dmax, 1, dmax, 1);
  bias("head.b", 1);
}

template <typename Real>
void Network<Real>::bind_tables() {
  tables_.clear();
  for (std::size_t i = 0; i < cfg_.features.num_sparse(); ++i) {
    tables_.push_back(&params_.get("emb." + std::to_string(i)));
  }
}

template <typename Real>
const Genotype& Network<Real>::genotype() const {
  if (!standalone_) throw Error("genotype(): a supernet has no fixed genotype");
  return genotype_;
}

template <typename Real>
bool Network<Real>::is_head(const Parameter<Real>& p) {
  return p.name.rfind("head.", 0) == 0;
}

template <typename Real>
Network<Real> Network<Real>::extract_subnet(const Genotype& genotype) const {
  if (standalone_) throw Error("extract_subnet: network is already standalone");
  Genotype g = genotype;
  canonicalize(g);
  require_valid(g, cfg_);

  Network out;
  out.cfg_ = cfg_;
  out.embedding_cap_ = embedding_cap_;
  out.standalone_ = true;
  out.genotype_ = g;

  const auto layout = subnet_layout(g, cfg_);
  const std::size_t ds = cfg_.features.embedding_dim;
  const std::size_t nmax = cfg_.max_sparse_rows();

  auto copy2 = [&](const std::string& name, const std::vector<std::size_t>& rows,
                   const std::vector<std::size_t>& cols) {
    const auto& src = params_.get(name);
    Tensor<Real> t({rows.size(), cols.size()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < cols.size(); ++j) t.at(i, j) = src.value.at(rows[i], cols[j]);
    }
    out.params_.add(name, src.kind, std::move(t)).trainable = src.trainable;
  };
  auto copy1 = [&](const std::string& name, std::size_t n) {
    const auto& src = params_.get(name);
    std::vector<Real> v(src.value.vec().begin(), src.value.vec().begin() + n);
    out.params_.add(name, src.kind, Tensor<Real>({n}, std::move(v))).trainable = src.trainable;
  };
  auto copy_all = [&](const std::string& name) {
    const auto& src = params_.get(name);
    out.params_.add(name, src.kind, src.value).trainable = src.trainable;
  };
  auto sparse_rows = [&](std::size_t s) {
    if (s == 0) return iota(cfg_.features.num_sparse());
    auto v = iota(layout.sparse_ops_rows[s]);
    if (g.blocks[s - 1].project_concat) v.push_back(nmax);
    return v;
  };

  for (std::size_t i = 0; i < cfg_.features.num_sparse(); ++i) copy_all("emb." + std::to_string(i));

  for (std::size_t b = 1; b <= g.blocks.size(); ++b) {
    const auto& blk = g.blocks[b - 1];
    auto dense_sources = [&](const std::string& name, const std::vector<std::size_t>& cols) {
      for (auto s : blk.dense_conns) {
        copy2(name + std::to_string(s), iota(layout.dense_width[s]), cols);
      }
    };
    auto sparse_sources = [&](const std::string& name, const std::vector<std::size_t>& cols) {
      for (auto s : blk.sparse_conns) copy2(name + std::to_string(s), sparse_rows(s), cols);
    };

    for (const auto& op : blk.dense_ops) {
      const std::string pre = block_prefix(b, op.kind);
      const auto cols = iota(op.dim);
      switch (op.kind) {
        case OperatorKind::kFC:
          dense_sources(pre + "w", cols);
          copy1(pre + "b", op.dim);
          break;
        case OperatorKind::kGating:
          dense_sources(pre + "wg", cols);
          copy1(pre + "bg", op.dim);
          dense_sources(pre + "wp", cols);
          copy1(pre + "bp", op.dim);
          break;
        case OperatorKind::kSum:
          dense_sources(pre + "wp", cols);
          copy1(pre + "bp", op.dim);
          break;
        case OperatorKind::kDotProduct: {
          dense_sources(pre + "wd", iota(ds));
          copy_all(pre + "bd");
          if (cfg_.balanced_dot_product) {
            const std::size_t t = dot_product_projection_target(cfg_.max_dense_dim());
            copy_all(pre + "wr_dense");
            sparse_sources(pre + "wr", iota(t));
            copy_all(pre + "br");
            copy2(pre + "wo", iota(t * (t - 1) / 2), cols);
          } else {
            // Map standalone rows into the supernet's fixed row universe.
            std::vector<std::size_t> universe_row{0};
            std::size_t offset = 1;
            for (std::size_t s = 0; s < b; ++s) {
              if (std::find(blk.sparse_conns.begin(), blk.sparse_conns.end(), s) !=
                  blk.sparse_conns.end()) {
                for (auto r : sparse_rows(s)) universe_row.push_back(offset + r);
              }
              offset += supernet_sparse_rows(cfg_, s);
            }
            std::vector<std::size_t> pairs;
            for (std::size_t i = 0; i < universe_row.size(); ++i) {
              for (std::size_t j = i + 1; j < universe_row.size(); ++j) {
                pairs.push_back(pair_index(universe_row[i], universe_row[j], offset));
              }
            }
            copy2(pre + "wo", pairs, cols);
          }
          copy1(pre + "bo", op.dim);
          break;
        }
        default:
          break;
      }
      if (cfg_.layer_norm) {
        copy1(pre + "ln_g", op.dim);
        copy1(pre + "ln_b", op.dim);
      }
    }
    for (const auto& op : blk.sparse_ops) {
      const std::string pre = block_prefix(b, op.kind);
      sparse_sources(pre + "w", iota(op.dim));
      copy1(pre + "b", op.dim);
      if (cfg_.layer_norm) {
        copy_all(pre + "ln_g");
        copy_all(pre + "ln_b");
      }
    }
    if (blk.project_concat) {
      const std::string pre = "b" + std::to_string(b) + ".pc.";
      copy2(pre + "w", iota(layout.dense_width[b]), iota(ds));
      copy_all(pre + "b");
    }
  }
  copy2("head.w", iota(layout.dense_width.back()), {0});
  copy_all("head.b");
  out.bind_tables();
  return out;
}

template <typename Real>
NodeId Network<Real>::forward(Graph<Real>& graph, const Batch& batch, const Genotype& g) {
  if (standalone_) throw Error("forward: standalone networks run their own genotype only");
  require_valid(g, cfg_);
  return run(graph, batch, g);
}

template <typename Real>
NodeId Network<Real>::forward(Graph<Real>& graph, const Batch& batch) {
  if (!standalone_) throw Error("forward: a supernet needs a genotype");
  return run(graph, batch, genotype_);
}

template <typename Real>
NodeId Network<Real>::run(Graph<Real>& G, const Batch& batch, const Genotype& g) {
  const auto& f = cfg_.features;
  const std::size_t B = batch.size;
  if (B == 0) throw Error("forward: empty batch");
  if (batch.dense.size() != B * f.num_dense || batch.ids.size() != B * f.num_sparse()) {
    throw Error("forward: batch does not match the feature spec");
  }
  const bool masked = !standalone_;
  const std::size_t ds = f.embedding_dim;
  const std::size_t dmax = cfg_.max_dense_dim();
  const std::size_t nmax = cfg_.max_sparse_rows();

  auto P = [&](const std::string& name) { return G.parameter(params_.get(name)); };

  Tensor<Real> raw({B, f.num_dense});
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<Real>(batch.dense[i]);
  std::vector<NodeId> yd{G.constant(std::move(raw))};
  std::vector<NodeId> ys{embedding_lookup<Real>(G, tables_, batch.ids, B)};
  // Rows of each sparse source that carry data under g (supernet mode only).
  std::vector<std::vector<std::uint8_t>> active{std::vector<std::uint8_t>(f.num_sparse(), 1)};

  for (std::size_t b = 1; b <= g.blocks.size(); ++b) {
    const auto& blk = g.blocks[b - 1];
    std::vector<NodeId> dense_in, sparse_in;
    for (auto s : blk.dense_conns) dense_in.push_back(yd[s]);
    for (auto s : blk.sparse_conns) sparse_in.push_back(ys[s]);

    auto sourced = [&](const std::string& weight, const std::vector<std::size_t>& conns,
                       const std::vector<NodeId>& inputs, const std::string& bias_name) {
      SourcedLinear lin{inputs, {}, P(bias_name)};
      for (auto s : conns) lin.weights.push_back(P(weight + std::to_string(s)));
      return lin;
    };

    // Dense branch.
    const std::size_t width = masked ? dmax : max_dim(blk.dense_ops);
    std::vector<NodeId> dense_terms;
    for (const auto& op : blk.dense_ops) {
      const std::string pre = block_prefix(b, op.kind);
      NodeId y;
      switch (op.kind) {
        case OperatorKind::kFC:
          y = op_fc(G, sourced(pre + "w", blk.dense_conns, dense_in, pre + "b"));
          break;
        case OperatorKind::kGating:
          y = op_gating(G, sourced(pre + "wg", blk.dense_conns, dense_in, pre + "bg"),
                        Operand{sourced(pre + "wp", blk.dense_conns, dense_in, pre + "bp")});
          break;
        case OperatorKind::kSum: {
          const std::size_t w = masked ? dmax : op.dim;
          std::vector<NodeId> xs;
          for (auto x : dense_in) xs.push_back(resize_lastdim(G, x, w));
          const NodeId x1 = xs.size() == 1 ? xs[0] : add_n<Real>(G, xs);
          y = op_sum(G, x1, Operand{sourced(pre + "wp", blk.dense_conns, dense_in, pre + "bp")});
          break;
        }
        case OperatorKind::kDotProduct: {
          DotProductParams p;
          p.dense = sourced(pre + "wd", blk.dense_conns, dense_in, pre + "bd");
          DotProductConfig dc{cfg_.balanced_dot_product, dot_product_projection_target(dmax)};
          if (cfg_.balanced_dot_product) {
            p.sparse = sparse_in;
            p.row_weights.push_back(P(pre + "wr_dense"));
            for (auto s : blk.sparse_conns) p.row_weights.push_back(P(pre + "wr" + std::to_string(s)));
            p.row_bias = P(pre + "br");
          } else if (masked) {
            // Every source keeps its rows in the universe; absent ones are zero.
            for (std::size_t s = 0; s < b; ++s) {
              if (std::find(blk.sparse_conns.begin(), blk.sparse_conns.end(), s) !=
                  blk.sparse_conns.end()) {
                p.sparse.push_back(ys[s]);
              } else {
                p.sparse.push_back(G.constant(Tensor<Real>({B, supernet_sparse_rows(cfg_, s), ds})));
              }
            }
          } else {
            p.sparse = sparse_in;
          }
          p.head_weight = P(pre + "wo");
          p.head_bias = P(pre + "bo");
          y = op_dot_product(G, p, dc);
          break;
        }
        default:
          throw Error("forward: sparse operator in the dense branch");
      }
      if (masked) y = apply_dim_mask(G, y, op.dim, MaskAxis::kLast);
      if (cfg_.layer_norm) {
        y = layer_norm(G, y, P(pre + "ln_g"), P(pre + "ln_b"), masked ? op.dim : 0);
      }
      if (!masked && op.dim != width) y = resize_lastdim(G, y, width);
      dense_terms.push_back(y);
    }
    const NodeId dense_out = dense_terms.size() == 1 ? dense_terms[0] : add_n<Real>(G, dense_terms);

    // Sparse branch.
    const std::size_t rows = masked ? nmax : max_dim(blk.sparse_ops);
    std::vector<NodeId> sparse_terms;
    for (const auto& op : blk.sparse_ops) {
      const std::string pre = block_prefix(b, op.kind);
      NodeId y;
      if (op.kind == OperatorKind::kEmbedFC) {
        y = op_embed_fc(G, sourced(pre + "w", blk.sparse_conns, sparse_in, pre + "b"));
      } else if (op.kind == OperatorKind::kAttention) {
        const NodeId x = sparse_in.size() == 1 ? sparse_in[0] : concat_middim<Real>(G, sparse_in);
        std::vector<std::uint8_t> keys;
        if (masked) {
          for (auto s : blk.sparse_conns) keys.insert(keys.end(), active[s].begin(), active[s].end());
        }
        const NodeId attended = op_attention<Real>(G, x, keys);
        std::vector<NodeId> pieces;
        std::size_t offset = 0;
        for (auto in : sparse_in) {
          const std::size_t r = G.shape(in)[1];
          pieces.push_back(sparse_in.size() == 1 ? attended
                                                 : slice_middim(G, attended, offset, offset + r));
          offset += r;
        }
        y = apply_middim_linear(G, sourced(pre + "w", blk.sparse_conns, pieces, pre + "b"));
      } else {
        throw Error("forward: dense operator in the sparse branch");
      }
      if (cfg_.layer_norm) y = layer_norm(G, y, P(pre + "ln_g"), P(pre + "ln_b"));
      if (masked) {
        y = apply_dim_mask(G, y, op.dim, MaskAxis::kMiddle);
      } else if (op.dim != rows) {
        y = resize_middim(G, y, rows);
      }
      sparse_terms.push_back(y);
    }
    NodeId sparse_out =
        sparse_terms.size() == 1 ? sparse_terms[0] : add_n<Real>(G, sparse_terms);

    if (blk.project_concat) {
      const std::string pre = "b" + std::to_string(b) + ".pc.";
      sparse_out = project_concatenate(G, sparse_out, SourcedLinear{{dense_out}, {P(pre + "w")}, P(pre + "b")});
    } else if (masked && cfg_.allow_project_concat) {
      const NodeId parts[] = {sparse_out, G.constant(Tensor<Real>({B, 1, ds}))};
      sparse_out = concat_middim<Real>(G, parts);
    }

    if (masked) {
      std::vector<std::uint8_t> act(supernet_sparse_rows(cfg_, b), 0);
      std::fill_n(act.begin(), max_dim(blk.sparse_ops), 1);
      if (blk.project_concat) act[nmax] = 1;
      active.push_back(std::move(act));
    }
    yd.push_back(dense_out);
    ys.push_back(sparse_out);
  }
  return linear(G, yd.back(), P("head.w"), P("head.b"));
}

template class Network<float>;
template class Network<double>;

}  // namespace nasrec
