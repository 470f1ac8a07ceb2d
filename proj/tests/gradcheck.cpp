#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nasrec/kernels.hpp"
#include "nasrec/operators.hpp"

namespace nasrec::testing {
namespace {

std::size_t draw(Rng& rng, std::size_t lo, std::size_t hi) { return lo + uniform_index(rng, hi - lo + 1); }

NodeId P(Graph<double>& g, GradInputs& in, const std::string& name) {
  return g.parameter(in.params.get(name));
}

// Random keep-mask of length n with at least one kept entry.
std::vector<std::uint8_t> random_keep(Rng& rng, std::size_t n) {
  std::vector<std::uint8_t> keep(n);
  for (auto& k : keep) k = coin_flip(rng) ? 1 : 0;
  keep[uniform_index(rng, n)] = 1;
  return keep;
}

// Keeps values at least `gap` away from zero so kinks stay outside the
// finite-difference stencil.
void push_off_zero(Parameter<double>& p, double gap) {
  for (auto& v : p.value.vec()) {
    if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
  }
}

std::vector<NodeId> params_with_prefix(Graph<double>& g, GradInputs& in, const std::string& prefix,
                                       std::size_t n) {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(P(g, in, prefix + std::to_string(i)));
  return out;
}

// n inputs x{i} (B x K_i) with weights w{i} (K_i x out) and bias b.
void make_sourced(GradInputs& in, Rng& rng, const std::string& tag, std::size_t batch,
                  std::size_t n, std::size_t out) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = draw(rng, 1, 4);
    in.add(tag + "x" + std::to_string(i), {batch, k}, rng);
    in.add(tag + "w" + std::to_string(i), {k, out}, rng);
  }
  in.add(tag + "b", {out}, rng);
}

SourcedLinear sourced(Graph<double>& g, GradInputs& in, const std::string& tag, std::size_t n) {
  return {params_with_prefix(g, in, tag + "x", n), params_with_prefix(g, in, tag + "w", n),
          P(g, in, tag + "b")};
}

}  // namespace

Parameter<double>& GradInputs::add(const std::string& name, Shape shape, Rng& rng, double lo,
                                   double hi) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.vec()) v = lo + (hi - lo) * uniform_real(rng);
  return params.add(name, ParamKind::kWeight, std::move(t));
}

std::vector<GradCase> kernel_cases() {
  std::vector<GradCase> cases;
  cases.push_back({"linear",
                   [](GradInputs& in, Rng& rng) {
                     const auto b = draw(rng, 1, 3), k = draw(rng, 1, 5), n = draw(rng, 1, 5);
                     in.add("x", {b, k}, rng);
                     in.add("w", {k, n}, rng);
                     in.add("b", {n}, rng);
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     return linear(g, P(g, in, "x"), P(g, in, "w"), P(g, in, "b"));
                   }});
  cases.push_back({"linear_no_bias",
                   [](GradInputs& in, Rng& rng) {
                     const auto b = draw(rng, 1, 3), k = draw(rng, 1, 5), n = draw(rng, 1, 5);
                     in.add("x", {b, k}, rng);
                     in.add("w", {k, n}, rng);
                   },
                   [](Graph<double>& g, GradInputs& in) { return linear(g, P(g, in, "x"), P(g, in, "w")); }});
  cases.push_back({"relu",
                   [](GradInputs& in, Rng& rng) {
                     push_off_zero(in.add("x", {draw(rng, 1, 3), draw(rng, 1, 6)}, rng), 1e-2);
                   },
                   [](Graph<double>& g, GradInputs& in) { return relu(g, P(g, in, "x")); }});
  cases.push_back({"sigmoid",
                   [](GradInputs& in, Rng& rng) { in.add("x", {draw(rng, 1, 3), draw(rng, 1, 6)}, rng, -3, 3); },
                   [](Graph<double>& g, GradInputs& in) { return sigmoid(g, P(g, in, "x")); }});
  cases.push_back({"softmax_lastdim",
                   [](GradInputs& in, Rng& rng) { in.add("x", {draw(rng, 1, 3), draw(rng, 1, 6)}, rng, -2, 2); },
                   [](Graph<double>& g, GradInputs& in) { return softmax_lastdim(g, P(g, in, "x")); }});
  cases.push_back({"softmax_lastdim_key_mask",
                   [](GradInputs& in, Rng& rng) {
                     const auto w = draw(rng, 1, 6);
                     in.add("x", {draw(rng, 1, 2), draw(rng, 1, 3), w}, rng, -2, 2);
                     in.flags = random_keep(rng, w);
                   },
                   [](Graph<double>& g, GradInputs& in) { return softmax_lastdim(g, P(g, in, "x"), in.flags); }});
  cases.push_back({"layer_norm",
                   [](GradInputs& in, Rng& rng) {
                     const auto w = draw(rng, 2, 6);
                     if (coin_flip(rng)) {
                       in.add("x", {draw(rng, 1, 3), w}, rng, -2, 2);
                     } else {
                       in.add("x", {draw(rng, 1, 2), draw(rng, 1, 3), w}, rng, -2, 2);
                     }
                     in.add("gamma", {w}, rng, 0.5, 1.5);
                     in.add("beta", {w}, rng);
                     in.sizes = {draw(rng, 1, w)};
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     return layer_norm(g, P(g, in, "x"), P(g, in, "gamma"), P(g, in, "beta"), in.sizes[0]);
                   }});
  cases.push_back({"concat_lastdim",
                   [](GradInputs& in, Rng& rng) {
                     const auto b = draw(rng, 1, 3), n = draw(rng, 1, 3);
                     for (std::size_t i = 0; i < n; ++i) in.add("x" + std::to_string(i), {b, draw(rng, 1, 4)}, rng);
                     in.sizes = {n};
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     const auto parts = params_with_prefix(g, in, "x", in.sizes[0]);
                     return concat_lastdim<double>(g, parts);
                   }});
  cases.push_back({"concat_middim",
                   [](GradInputs& in, Rng& rng) {
                     const auto b = draw(rng, 1, 3), d = draw(rng, 1, 4), n = draw(rng, 1, 3);
                     for (std::size_t i = 0; i < n; ++i) in.add("x" + std::to_string(i), {b, draw(rng, 1, 3), d}, rng);
                     in.sizes = {n};
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     const auto parts = params_with_prefix(g, in, "x", in.sizes[0]);
                     return concat_middim<double>(g, parts);
                   }});
  cases.push_back({"add",
                   [](GradInputs& in, Rng& rng) {
                     const Shape s = {draw(rng, 1, 3), draw(rng, 1, 3), draw(rng, 1, 4)};
                     in.add("a", s, rng);
                     in.add("b", s, rng);
                   },
                   [](Graph<double>& g, GradInputs& in) { return add(g, P(g, in, "a"), P(g, in, "b")); }});
  cases.push_back({"add_n",
                   [](GradInputs& in, Rng& rng) {
                     const Shape s = {draw(rng, 1, 3), draw(rng, 1, 5)};
                     const auto n = draw(rng, 1, 4);
                     for (std::size_t i = 0; i < n; ++i) in.add("x" + std::to_string(i), s, rng);
                     in.sizes = {n};
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     const auto terms = params_with_prefix(g, in, "x", in.sizes[0]);
                     return add_n<double>(g, terms);
                   }});
  cases.push_back({"elementwise_mul",
                   [](GradInputs& in, Rng& rng) {
                     const Shape s = {draw(rng, 1, 3), draw(rng, 1, 5)};
                     in.add("a", s, rng);
                     in.add("b", s, rng);
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     return elementwise_mul(g, P(g, in, "a"), P(g, in, "b"));
                   }});
  cases.push_back({"elementwise_mul_square",
                   [](GradInputs& in, Rng& rng) { in.add("a", {draw(rng, 1, 3), draw(rng, 1, 5)}, rng); },
                   [](Graph<double>& g, GradInputs& in) {
                     const NodeId a = P(g, in, "a");
                     return elementwise_mul(g, a, a);
                   }});
  cases.push_back({"scale",
                   [](GradInputs& in, Rng& rng) { in.add("x", {draw(rng, 1, 3), draw(rng, 1, 5)}, rng); },
                   [](Graph<double>& g, GradInputs& in) { return scale(g, P(g, in, "x"), -1.7); }});
  cases.push_back({"batched_matmul",
                   [](GradInputs& in, Rng& rng) {
                     const auto b = draw(rng, 1, 3), m = draw(rng, 1, 4), k = draw(rng, 1, 4), n = draw(rng, 1, 4);
                     in.add("a", {b, m, k}, rng);
                     in.add("b", {b, k, n}, rng);
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     return batched_matmul(g, P(g, in, "a"), P(g, in, "b"));
                   }});
  cases.push_back({"batched_matmul_transpose_b",
                   [](GradInputs& in, Rng& rng) {
                     const auto b = draw(rng, 1, 3), m = draw(rng, 1, 4), k = draw(rng, 1, 4), n = draw(rng, 1, 4);
                     in.add("a", {b, m, k}, rng);
                     in.add("b", {b, n, k}, rng);
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     return batched_matmul(g, P(g, in, "a"), P(g, in, "b"), true);
                   }});
  cases.push_back({"batched_matmul_gram",
                   [](GradInputs& in, Rng& rng) { in.add("x", {draw(rng, 1, 3), draw(rng, 1, 4), draw(rng, 1, 4)}, rng); },
                   [](Graph<double>& g, GradInputs& in) {
                     const NodeId x = P(g, in, "x");
                     return batched_matmul(g, x, x, true);
                   }});
  cases.push_back({"mask",
                   [](GradInputs& in, Rng& rng) {
                     const auto axis = draw(rng, 1, 2);
                     const Shape s = axis == 1 && coin_flip(rng)
                                         ? Shape{draw(rng, 1, 3), draw(rng, 1, 5)}
                                         : Shape{draw(rng, 1, 3), draw(rng, 1, 4), draw(rng, 1, 4)};
                     in.add("x", s, rng);
                     in.sizes = {axis};
                     in.flags = random_keep(rng, s[axis]);
                   },
                   [](Graph<double>& g, GradInputs& in) { return mask(g, P(g, in, "x"), in.sizes[0], in.flags); }});
  cases.push_back({"triu_flatten",
                   [](GradInputs& in, Rng& rng) {
                     const auto k = draw(rng, 2, 5);
                     in.add("x", {draw(rng, 1, 3), k, k}, rng);
                   },
                   [](Graph<double>& g, GradInputs& in) { return triu_flatten(g, P(g, in, "x")); }});
  cases.push_back({"middim_linear",
                   [](GradInputs& in, Rng& rng) {
                     const auto b = draw(rng, 1, 3), nin = draw(rng, 1, 4), nout = draw(rng, 1, 4), d = draw(rng, 1, 4);
                     in.add("x", {b, nin, d}, rng);
                     in.add("w", {nin, nout}, rng);
                     in.add("b", {nout}, rng);
                     in.sizes = {coin_flip(rng) ? 1u : 0u};
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     const auto b = in.sizes[0] ? std::optional<NodeId>(P(g, in, "b")) : std::nullopt;
                     return middim_linear(g, P(g, in, "x"), P(g, in, "w"), b);
                   }});
  cases.push_back({"slice_middim",
                   [](GradInputs& in, Rng& rng) {
                     const auto rows = draw(rng, 1, 5);
                     in.add("x", {draw(rng, 1, 3), rows, draw(rng, 1, 4)}, rng);
                     const auto begin = draw(rng, 0, rows - 1);
                     in.sizes = {begin, draw(rng, begin + 1, rows)};
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     return slice_middim(g, P(g, in, "x"), in.sizes[0], in.sizes[1]);
                   }});
  cases.push_back({"resize_lastdim",
                   [](GradInputs& in, Rng& rng) {
                     in.add("x", {draw(rng, 1, 3), draw(rng, 1, 5)}, rng);
                     in.sizes = {draw(rng, 1, 7)};
                   },
                   [](Graph<double>& g, GradInputs& in) { return resize_lastdim(g, P(g, in, "x"), in.sizes[0]); }});
  cases.push_back({"resize_middim",
                   [](GradInputs& in, Rng& rng) {
                     in.add("x", {draw(rng, 1, 3), draw(rng, 1, 4), draw(rng, 1, 3)}, rng);
                     in.sizes = {draw(rng, 1, 6)};
                   },
                   [](Graph<double>& g, GradInputs& in) { return resize_middim(g, P(g, in, "x"), in.sizes[0]); }});
  cases.push_back({"unsqueeze_middle",
                   [](GradInputs& in, Rng& rng) { in.add("x", {draw(rng, 1, 3), draw(rng, 1, 5)}, rng); },
                   [](Graph<double>& g, GradInputs& in) { return unsqueeze_middle(g, P(g, in, "x")); }});
  cases.push_back({"embedding_lookup",
                   [](GradInputs& in, Rng& rng) {
                     const auto fields = draw(rng, 1, 3), d = draw(rng, 1, 4), batch = draw(rng, 1, 4);
                     for (std::size_t f = 0; f < fields; ++f) in.add("t" + std::to_string(f), {draw(rng, 1, 4), d}, rng);
                     in.sizes = {batch};
                     // Ids beyond the table size wrap around.
                     for (std::size_t i = 0; i < batch * fields; ++i) in.sizes.push_back(uniform_index(rng, 9));
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     std::vector<Parameter<double>*> tables;
                     for (std::size_t f = 0; in.params.contains("t" + std::to_string(f)); ++f) {
                       tables.push_back(&in.params.get("t" + std::to_string(f)));
                     }
                     std::vector<std::uint32_t> ids(in.sizes.begin() + 1, in.sizes.end());
                     return embedding_lookup<double>(g, tables, ids, in.sizes[0]);
                   }});
  cases.push_back({"sum_all",
                   [](GradInputs& in, Rng& rng) { in.add("x", {draw(rng, 1, 3), draw(rng, 1, 5)}, rng); },
                   [](Graph<double>& g, GradInputs& in) { return sum_all(g, P(g, in, "x")); }});
  cases.push_back({"weighted_sum",
                   [](GradInputs& in, Rng& rng) {
                     const Shape s = {draw(rng, 1, 3), draw(rng, 1, 5)};
                     in.add("x", s, rng);
                     in.add("w", s, rng).trainable = false;
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     return weighted_sum(g, P(g, in, "x"), in.params.get("w").value);
                   }});
  cases.push_back({"bce_with_logits",
                   [](GradInputs& in, Rng& rng) {
                     const auto n = draw(rng, 1, 6);
                     in.add("z", {n, 1}, rng, -4, 4);
                     for (std::size_t i = 0; i < n; ++i) in.flags.push_back(coin_flip(rng) ? 1 : 0);
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     std::vector<float> labels(in.flags.begin(), in.flags.end());
                     return bce_with_logits(g, P(g, in, "z"), labels);
                   }});
  return cases;
}

std::vector<GradCase> operator_cases() {
  std::vector<GradCase> cases;
  cases.push_back({"apply_dim_mask",
                   [](GradInputs& in, Rng& rng) {
                     const bool dense = coin_flip(rng);
                     const Shape s = dense ? Shape{draw(rng, 1, 3), draw(rng, 1, 6)}
                                           : Shape{draw(rng, 1, 3), draw(rng, 1, 5), draw(rng, 1, 3)};
                     in.add("v", s, rng);
                     in.sizes = {dense ? 1u : 0u, draw(rng, 1, s[1])};
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     return apply_dim_mask(g, P(g, in, "v"), in.sizes[1],
                                           in.sizes[0] ? MaskAxis::kLast : MaskAxis::kMiddle);
                   }});
  cases.push_back({"op_fc",
                   [](GradInputs& in, Rng& rng) {
                     const auto n = draw(rng, 1, 3);
                     make_sourced(in, rng, "", draw(rng, 1, 3), n, draw(rng, 1, 5));
                     in.sizes = {n};
                   },
                   [](Graph<double>& g, GradInputs& in) { return op_fc(g, sourced(g, in, "", in.sizes[0])); }});
  cases.push_back({"op_gating",
                   [](GradInputs& in, Rng& rng) {
                     const auto b = draw(rng, 1, 3), n = draw(rng, 1, 3), out = draw(rng, 1, 5);
                     make_sourced(in, rng, "g", b, n, out);
                     const bool project = coin_flip(rng);
                     if (project) {
                       make_sourced(in, rng, "p", b, 1, out);
                     } else {
                       in.add("x2", {b, out}, rng);
                     }
                     in.sizes = {n, project ? 1u : 0u};
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     const auto gate = sourced(g, in, "g", in.sizes[0]);
                     if (in.sizes[1]) return op_gating(g, gate, Operand(sourced(g, in, "p", 1)));
                     return op_gating(g, gate, Operand(P(g, in, "x2")));
                   }});
  cases.push_back({"op_sum",
                   [](GradInputs& in, Rng& rng) {
                     const auto b = draw(rng, 1, 3), out = draw(rng, 1, 5), n = draw(rng, 1, 3);
                     in.add("x1", {b, out}, rng);
                     const bool project = coin_flip(rng);
                     if (project) {
                       make_sourced(in, rng, "p", b, n, out);
                     } else {
                       in.add("x2", {b, out}, rng);
                     }
                     in.sizes = {n, project ? 1u : 0u};
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     const NodeId x1 = P(g, in, "x1");
                     if (in.sizes[1]) return op_sum(g, x1, Operand(sourced(g, in, "p", in.sizes[0])));
                     return op_sum(g, x1, Operand(P(g, in, "x2")));
                   }});
  cases.push_back({"op_dot_product",
                   [](GradInputs& in, Rng& rng) {
                     const auto b = draw(rng, 1, 3), ds = draw(rng, 1, 3), out = draw(rng, 1, 4);
                     const bool balanced = coin_flip(rng);
                     bool dense = coin_flip(rng);
                     const auto n_sparse = draw(rng, dense ? 0 : 1, 2);
                     std::size_t rows = dense ? 1 : 0;
                     std::vector<std::size_t> piece_rows;
                     if (dense) {
                       make_sourced(in, rng, "d", b, draw(rng, 1, 2), ds);
                       piece_rows.push_back(1);
                     }
                     for (std::size_t i = 0; i < n_sparse; ++i) {
                       const auto r = draw(rng, 1, 3);
                       in.add("s" + std::to_string(i), {b, r, ds}, rng);
                       piece_rows.push_back(r);
                       rows += r;
                     }
                     if (!balanced && rows < 2) {
                       in.add("s" + std::to_string(n_sparse), {b, 2, ds}, rng);
                       piece_rows.push_back(2);
                       rows += 2;
                     }
                     const std::size_t stacked = balanced ? draw(rng, 2, 4) : rows;
                     if (balanced) {
                       for (std::size_t i = 0; i < piece_rows.size(); ++i) {
                         in.add("r" + std::to_string(i), {piece_rows[i], stacked}, rng);
                       }
                       in.add("rb", {stacked}, rng);
                     }
                     in.add("hw", {stacked * (stacked - 1) / 2, out}, rng);
                     in.add("hb", {out}, rng);
                     const std::size_t pieces = piece_rows.size() - (dense ? 1 : 0);
                     in.sizes = {balanced ? 1u : 0u, dense ? 1u : 0u, pieces,
                                 dense ? in.params.contains("dx1") ? 2u : 1u : 0u};
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     DotProductParams p;
                     const bool balanced = in.sizes[0] != 0;
                     if (in.sizes[1]) p.dense = sourced(g, in, "d", in.sizes[3]);
                     p.sparse = params_with_prefix(g, in, "s", in.sizes[2]);
                     if (balanced) {
                       p.row_weights = params_with_prefix(g, in, "r", in.sizes[2] + in.sizes[1]);
                       p.row_bias = P(g, in, "rb");
                     }
                     p.head_weight = P(g, in, "hw");
                     p.head_bias = P(g, in, "hb");
                     return op_dot_product(g, p, DotProductConfig{balanced, 0});
                   }});
  cases.push_back({"op_embed_fc",
                   [](GradInputs& in, Rng& rng) {
                     const auto b = draw(rng, 1, 3), d = draw(rng, 1, 4), nout = draw(rng, 1, 4), n = draw(rng, 1, 3);
                     for (std::size_t i = 0; i < n; ++i) {
                       const auto r = draw(rng, 1, 3);
                       in.add("x" + std::to_string(i), {b, r, d}, rng);
                       in.add("w" + std::to_string(i), {r, nout}, rng);
                     }
                     in.add("b", {nout}, rng);
                     in.sizes = {n};
                   },
                   [](Graph<double>& g, GradInputs& in) { return op_embed_fc(g, sourced(g, in, "", in.sizes[0])); }});
  cases.push_back({"op_attention",
                   [](GradInputs& in, Rng& rng) {
                     const auto rows = draw(rng, 1, 4);
                     in.add("x", {draw(rng, 1, 3), rows, draw(rng, 1, 4)}, rng);
                     if (coin_flip(rng)) in.flags = random_keep(rng, rows);
                   },
                   [](Graph<double>& g, GradInputs& in) { return op_attention(g, P(g, in, "x"), in.flags); }});
  cases.push_back({"project_concatenate",
                   [](GradInputs& in, Rng& rng) {
                     const auto b = draw(rng, 1, 3), ds = draw(rng, 1, 4), n = draw(rng, 1, 2);
                     in.add("ys", {b, draw(rng, 1, 4), ds}, rng);
                     make_sourced(in, rng, "p", b, n, ds);
                     in.sizes = {n};
                   },
                   [](Graph<double>& g, GradInputs& in) {
                     return project_concatenate(g, P(g, in, "ys"), sourced(g, in, "p", in.sizes[0]));
                   }});
  return cases;
}

GradCheckResult check_gradients(const GradCase& c, std::uint64_t seed, double floor) {
  Rng rng(seed);
  GradInputs in;
  c.make(in, rng);
  Tensor<double> weights;
  auto loss = [&](bool with_grad) {
    Graph<double> g(with_grad);
    const NodeId out = c.build(g, in);
    if (weights.empty()) {
      Rng wr(splitmix64(seed));
      weights = Tensor<double>(g.shape(out));
      for (auto& v : weights.vec()) v = 2.0 * uniform_real(wr) - 1.0;
    }
    const NodeId l = weighted_sum(g, out, weights);
    if (with_grad) {
      in.params.zero_grad();
      g.backward(l);
    }
    return g.value(l)[0];
  };
  loss(true);
  std::vector<Tensor<double>> analytic;
  for (const auto& p : in.params) analytic.push_back(p.grad);

  GradCheckResult r;
  std::size_t pi = 0;
  for (auto& p : in.params) {
    for (std::size_t i = 0; p.trainable && i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + kFiniteDifferenceStep;
      const double up = loss(false);
      p.value[i] = saved - kFiniteDifferenceStep;
      const double down = loss(false);
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * kFiniteDifferenceStep);
      const double a = analytic[pi][i];
      double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
      if (err > r.max_rel_error || r.checked == 0) {
        r.max_rel_error = std::max(r.max_rel_error, err);
        if (err >= r.max_rel_error) r.worst = p.name + "[" + std::to_string(i) + "]";
      }
      ++r.checked;
    }
    ++pi;
  }
  return r;
}

}  // namespace nasrec::testing
