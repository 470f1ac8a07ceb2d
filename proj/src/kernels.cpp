#include "nasrec/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nasrec {
namespace {

template <typename Real>
void require_rank(const char* kernel, const Tensor<Real>& t, std::size_t rank) {
  if (t.rank() != rank) throw ShapeError(kernel, t.shape(), Shape(rank, 0));
}

// Product of all extents except the last.
inline std::size_t outer_size(const Shape& s) { return shape_size(s) / s.back(); }

}  // namespace

template <typename Real>
NodeId linear(Graph<Real>& g, NodeId x, NodeId w, std::optional<NodeId> b) {
  const auto& X = g.value(x);
  const auto& W = g.value(w);
  require_rank("linear", X, 2);
  if (W.rank() != 2 || W.dim(0) != X.dim(1)) throw ShapeError("linear", X.shape(), W.shape());
  const std::size_t batch = X.dim(0), in = X.dim(1), out = W.dim(1);
  if (b && (g.value(*b).rank() != 1 || g.value(*b).dim(0) != out)) {
    throw ShapeError("linear", W.shape(), g.value(*b).shape());
  }
  Tensor<Real> Y({batch, out});
  for (std::size_t r = 0; r < batch; ++r) {
    Real* y = &Y[r * out];
    if (b) {
      const auto& B = g.value(*b);
      for (std::size_t n = 0; n < out; ++n) y[n] = B[n];
    }
    for (std::size_t k = 0; k < in; ++k) {
      const Real xv = X[r * in + k];
      if (xv == Real(0)) continue;
      const Real* wr = &W[k * out];
      for (std::size_t n = 0; n < out; ++n) y[n] += xv * wr[n];
    }
  }
  g.add_flops(2ULL * batch * in * out);
  bool rg = g.requires_grad(x) || g.requires_grad(w) || (b && g.requires_grad(*b));
  return g.push(std::move(Y), rg, [x, w, b, batch, in, out](Graph<Real>& g, NodeId self) {
    const auto& GY = g.grad(self);
    const auto& X = g.value(x);
    const auto& W = g.value(w);
    if (g.requires_grad(x)) {
      auto& GX = g.grad(x);
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t k = 0; k < in; ++k) {
          Real acc = 0;
          for (std::size_t n = 0; n < out; ++n) acc += GY[r * out + n] * W[k * out + n];
          GX[r * in + k] += acc;
        }
      }
    }
    if (g.requires_grad(w)) {
      auto& GW = g.grad(w);
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t k = 0; k < in; ++k) {
          const Real xv = X[r * in + k];
          if (xv == Real(0)) continue;
          for (std::size_t n = 0; n < out; ++n) GW[k * out + n] += xv * GY[r * out + n];
        }
      }
    }
    if (b && g.requires_grad(*b)) {
      auto& GB = g.grad(*b);
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t n = 0; n < out; ++n) GB[n] += GY[r * out + n];
      }
    }
  });
}

template <typename Real>
NodeId relu(Graph<Real>& g, NodeId x) {
  Tensor<Real> Y = g.value(x);
  for (auto& v : Y.vec()) v = v > Real(0) ? v : Real(0);
  return g.push(std::move(Y), g.requires_grad(x), [x](Graph<Real>& g, NodeId self) {
    const auto& X = g.value(x);
    const auto& GY = g.grad(self);
    auto& GX = g.grad(x);
    for (std::size_t i = 0; i < X.size(); ++i) {
      if (X[i] > Real(0)) GX[i] += GY[i];
    }
  });
}

template <typename Real>
NodeId sigmoid(Graph<Real>& g, NodeId x) {
  Tensor<Real> Y = g.value(x);
  for (auto& v : Y.vec()) v = Real(1) / (Real(1) + std::exp(-v));
  return g.push(std::move(Y), g.requires_grad(x), [x](Graph<Real>& g, NodeId self) {
    const auto& Y = g.value(self);
    const auto& GY = g.grad(self);
    auto& GX = g.grad(x);
    for (std::size_t i = 0; i < Y.size(); ++i) GX[i] += GY[i] * Y[i] * (Real(1) - Y[i]);
  });
}

template <typename Real>
NodeId softmax_lastdim(Graph<Real>& g, NodeId x, std::span<const std::uint8_t> key_mask) {
  const auto& X = g.value(x);
  const std::size_t width = X.shape().back();
  const std::size_t rows = outer_size(X.shape());
  std::vector<std::uint8_t> keep(key_mask.begin(), key_mask.end());
  if (keep.empty()) keep.assign(width, 1);
  if (keep.size() != width) throw ShapeError("softmax_lastdim", X.shape(), {keep.size()});
  if (std::none_of(keep.begin(), keep.end(), [](auto k) { return k != 0; })) {
    throw Error("softmax_lastdim: every position is masked");
  }
  Tensor<Real> Y(X.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = &X[r * width];
    Real* yr = &Y[r * width];
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < width; ++j) {
      if (keep[j]) mx = std::max(mx, xr[j]);
    }
    Real total = 0;
    for (std::size_t j = 0; j < width; ++j) {
      yr[j] = keep[j] ? std::exp(xr[j] - mx) : Real(0);
      total += yr[j];
    }
    for (std::size_t j = 0; j < width; ++j) yr[j] /= total;
  }
  g.add_flops(kSoftmaxFlopsPerElement * X.size());
  return g.push(std::move(Y), g.requires_grad(x), [x, rows, width](Graph<Real>& g, NodeId self) {
    const auto& Y = g.value(self);
    const auto& GY = g.grad(self);
    auto& GX = g.grad(x);
    for (std::size_t r = 0; r < rows; ++r) {
      Real dot = 0;
      for (std::size_t j = 0; j < width; ++j) dot += Y[r * width + j] * GY[r * width + j];
      for (std::size_t j = 0; j < width; ++j) {
        GX[r * width + j] += Y[r * width + j] * (GY[r * width + j] - dot);
      }
    }
  });
}

template <typename Real>
NodeId layer_norm(Graph<Real>& g, NodeId x, NodeId gamma, NodeId beta, std::size_t active,
                  Real eps) {
  const auto& X = g.value(x);
  const auto& G = g.value(gamma);
  const auto& B = g.value(beta);
  const std::size_t width = X.shape().back();
  if (G.rank() != 1 || G.dim(0) != width) throw ShapeError("layer_norm", X.shape(), G.shape());
  if (B.shape() != G.shape()) throw ShapeError("layer_norm", G.shape(), B.shape());
  if (active == 0) active = width;
  if (active > width) throw ShapeError("layer_norm", X.shape(), {active});
  const std::size_t rows = outer_size(X.shape());
  Tensor<Real> Y(X.shape());
  Tensor<Real> xhat(X.shape());
  std::vector<Real> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = &X[r * width];
    Real mean = 0;
    for (std::size_t j = 0; j < active; ++j) mean += xr[j];
    mean /= Real(active);
    Real var = 0;
    for (std::size_t j = 0; j < active; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= Real(active);
    const Real inv = Real(1) / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < active; ++j) {
      const Real h = (xr[j] - mean) * inv;
      xhat[r * width + j] = h;
      Y[r * width + j] = h * G[j] + B[j];
    }
  }
  g.add_flops(kLayerNormFlopsPerElement * rows * active);
  const bool rg = g.any_requires_grad({x, gamma, beta});
  return g.push(std::move(Y), rg,
                [x, gamma, beta, rows, width, active, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](Graph<Real>& g, NodeId self) {
                  const auto& GY = g.grad(self);
                  const auto& G = g.value(gamma);
                  if (g.requires_grad(gamma) || g.requires_grad(beta)) {
                    auto& GG = g.grad(gamma);
                    auto& GB = g.grad(beta);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t j = 0; j < active; ++j) {
                        GG[j] += GY[r * width + j] * xhat[r * width + j];
                        GB[j] += GY[r * width + j];
                      }
                    }
                  }
                  if (!g.requires_grad(x)) return;
                  auto& GX = g.grad(x);
                  const Real n = Real(active);
                  for (std::size_t r = 0; r < rows; ++r) {
                    Real sum_d = 0, sum_dh = 0;
                    for (std::size_t j = 0; j < active; ++j) {
                      const Real d = GY[r * width + j] * G[j];
                      sum_d += d;
                      sum_dh += d * xhat[r * width + j];
                    }
                    for (std::size_t j = 0; j < active; ++j) {
                      const Real d = GY[r * width + j] * G[j];
                      GX[r * width + j] +=
                          inv_std[r] / n * (n * d - sum_d - xhat[r * width + j] * sum_dh);
                    }
                  }
                });
}

template <typename Real>
NodeId concat_lastdim(Graph<Real>& g, std::span<const NodeId> parts) {
  if (parts.empty()) throw Error("concat_lastdim: no inputs");
  Shape head = g.shape(parts[0]);
  head.pop_back();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  bool rg = false;
  for (auto p : parts) {
    Shape s = g.shape(p);
    const std::size_t w = s.back();
    s.pop_back();
    if (s != head) throw ShapeError("concat_lastdim", g.shape(parts[0]), g.shape(p));
    widths.push_back(w);
    total += w;
    rg = rg || g.requires_grad(p);
  }
  Shape out_shape = head;
  out_shape.push_back(total);
  Tensor<Real> Y(out_shape);
  const std::size_t rows = shape_size(out_shape) / total;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& P = g.value(parts[i]);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(&P[r * widths[i]], widths[i], &Y[r * total + offset]);
    }
    offset += widths[i];
  }
  std::vector<NodeId> ids(parts.begin(), parts.end());
  return g.push(std::move(Y), rg, [ids, widths, rows, total](Graph<Real>& g, NodeId self) {
    const auto& GY = g.grad(self);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (g.requires_grad(ids[i])) {
        auto& GP = g.grad(ids[i]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < widths[i]; ++j) {
            GP[r * widths[i] + j] += GY[r * total + offset + j];
          }
        }
      }
      offset += widths[i];
    }
  });
}

template <typename Real>
NodeId concat_middim(Graph<Real>& g, std::span<const NodeId> parts) {
  if (parts.empty()) throw Error("concat_middim: no inputs");
  const auto& first = g.value(parts[0]);
  require_rank("concat_middim", first, 3);
  const std::size_t batch = first.dim(0), width = first.dim(2);
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  bool rg = false;
  for (auto p : parts) {
    const auto& P = g.value(p);
    if (P.rank() != 3 || P.dim(0) != batch || P.dim(2) != width) {
      throw ShapeError("concat_middim", first.shape(), P.shape());
    }
    counts.push_back(P.dim(1));
    total += P.dim(1);
    rg = rg || g.requires_grad(p);
  }
  Tensor<Real> Y({batch, total, width});
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& P = g.value(parts[i]);
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(&P[b * counts[i] * width], counts[i] * width,
                  &Y[(b * total + offset) * width]);
    }
    offset += counts[i];
  }
  std::vector<NodeId> ids(parts.begin(), parts.end());
  return g.push(std::move(Y), rg,
                [ids, counts, batch, total, width](Graph<Real>& g, NodeId self) {
                  const auto& GY = g.grad(self);
                  std::size_t offset = 0;
                  for (std::size_t i = 0; i < ids.size(); ++i) {
                    if (g.requires_grad(ids[i])) {
                      auto& GP = g.grad(ids[i]);
                      const std::size_t n = counts[i] * width;
                      for (std::size_t b = 0; b < batch; ++b) {
                        const Real* src = &GY[(b * total + offset) * width];
                        Real* dst = &GP[b * n];
                        for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
                      }
                    }
                    offset += counts[i];
                  }
                });
}

template <typename Real>
NodeId add(Graph<Real>& g, NodeId a, NodeId b) {
  const NodeId terms[] = {a, b};
  return add_n<Real>(g, terms);
}

template <typename Real>
NodeId add_n(Graph<Real>& g, std::span<const NodeId> terms) {
  if (terms.empty()) throw Error("add_n: no inputs");
  Tensor<Real> Y = g.value(terms[0]);
  bool rg = g.requires_grad(terms[0]);
  for (std::size_t i = 1; i < terms.size(); ++i) {
    const auto& T = g.value(terms[i]);
    if (T.shape() != Y.shape()) throw ShapeError("add", Y.shape(), T.shape());
    for (std::size_t j = 0; j < Y.size(); ++j) Y[j] += T[j];
    rg = rg || g.requires_grad(terms[i]);
  }
  std::vector<NodeId> ids(terms.begin(), terms.end());
  return g.push(std::move(Y), rg, [ids](Graph<Real>& g, NodeId self) {
    const auto& GY = g.grad(self);
    for (auto id : ids) {
      if (!g.requires_grad(id)) continue;
      auto& GT = g.grad(id);
      for (std::size_t j = 0; j < GY.size(); ++j) GT[j] += GY[j];
    }
  });
}

template <typename Real>
NodeId elementwise_mul(Graph<Real>& g, NodeId a, NodeId b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  if (A.shape() != B.shape()) throw ShapeError("elementwise_mul", A.shape(), B.shape());
  Tensor<Real> Y(A.shape());
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = A[i] * B[i];
  return g.push(std::move(Y), g.any_requires_grad({a, b}), [a, b](Graph<Real>& g, NodeId self) {
    const auto& GY = g.grad(self);
    const auto& A = g.value(a);
    const auto& B = g.value(b);
    if (g.requires_grad(a)) {
      auto& GA = g.grad(a);
      for (std::size_t i = 0; i < GY.size(); ++i) GA[i] += GY[i] * B[i];
    }
    if (g.requires_grad(b)) {
      auto& GB = g.grad(b);
      for (std::size_t i = 0; i < GY.size(); ++i) GB[i] += GY[i] * A[i];
    }
  });
}

template <typename Real>
NodeId scale(Graph<Real>& g, NodeId x, Real factor) {
  Tensor<Real> Y = g.value(x);
  for (auto& v : Y.vec()) v *= factor;
  return g.push(std::move(Y), g.requires_grad(x), [x, factor](Graph<Real>& g, NodeId self) {
    const auto& GY = g.grad(self);
    auto& GX = g.grad(x);
    for (std::size_t i = 0; i < GY.size(); ++i) GX[i] += GY[i] * factor;
  });
}

template <typename Real>
NodeId batched_matmul(Graph<Real>& g, NodeId a, NodeId b, bool transpose_b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  if (A.rank() != 3 || B.rank() != 3 || A.dim(0) != B.dim(0)) {
    throw ShapeError("batched_matmul", A.shape(), B.shape());
  }
  const std::size_t batch = A.dim(0), m = A.dim(1), k = A.dim(2);
  const std::size_t kb = transpose_b ? B.dim(2) : B.dim(1);
  const std::size_t n = transpose_b ? B.dim(1) : B.dim(2);
  if (kb != k) throw ShapeError("batched_matmul", A.shape(), B.shape());
  // B element (kk, nn) of batch bi.
  auto bidx = [=](std::size_t bi, std::size_t kk, std::size_t nn) {
    return transpose_b ? (bi * n + nn) * k + kk : (bi * k + kk) * n + nn;
  };
  Tensor<Real> Y({batch, m, n});
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        Real acc = 0;
        for (std::size_t kk = 0; kk < k; ++kk) acc += A[(bi * m + i) * k + kk] * B[bidx(bi, kk, j)];
        Y[(bi * m + i) * n + j] = acc;
      }
    }
  }
  g.add_flops(2ULL * batch * m * k * n);
  return g.push(std::move(Y), g.any_requires_grad({a, b}),
                [a, b, batch, m, k, n, bidx](Graph<Real>& g, NodeId self) {
                  const auto& GY = g.grad(self);
                  const auto& A = g.value(a);
                  const auto& B = g.value(b);
                  if (g.requires_grad(a)) {
                    auto& GA = g.grad(a);
                    for (std::size_t bi = 0; bi < batch; ++bi)
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t kk = 0; kk < k; ++kk) {
                          Real acc = 0;
                          for (std::size_t j = 0; j < n; ++j)
                            acc += GY[(bi * m + i) * n + j] * B[bidx(bi, kk, j)];
                          GA[(bi * m + i) * k + kk] += acc;
                        }
                  }
                  if (g.requires_grad(b)) {
                    auto& GB = g.grad(b);
                    for (std::size_t bi = 0; bi < batch; ++bi)
                      for (std::size_t kk = 0; kk < k; ++kk)
                        for (std::size_t j = 0; j < n; ++j) {
                          Real acc = 0;
                          for (std::size_t i = 0; i < m; ++i)
                            acc += A[(bi * m + i) * k + kk] * GY[(bi * m + i) * n + j];
                          GB[bidx(bi, kk, j)] += acc;
                        }
                  }
                });
}

template <typename Real>
NodeId mask(Graph<Real>& g, NodeId x, std::size_t axis, std::span<const std::uint8_t> keep) {
  const auto& X = g.value(x);
  if (axis == 0 || axis >= X.rank()) throw ShapeError("mask", X.shape(), {axis});
  if (keep.size() != X.dim(axis)) throw ShapeError("mask", X.shape(), {keep.size()});
  // Index decomposition: [outer][axis][inner].
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < X.rank(); ++i) inner *= X.dim(i);
  const std::size_t extent = X.dim(axis);
  const std::size_t outer = X.size() / (inner * extent);
  std::vector<std::uint8_t> k(keep.begin(), keep.end());
  Tensor<Real> Y = X;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t a = 0; a < extent; ++a)
      if (!k[a]) std::fill_n(&Y[(o * extent + a) * inner], inner, Real(0));
  return g.push(std::move(Y), g.requires_grad(x),
                [x, k = std::move(k), outer, extent, inner](Graph<Real>& g, NodeId self) {
                  const auto& GY = g.grad(self);
                  auto& GX = g.grad(x);
                  for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t a = 0; a < extent; ++a) {
                      if (!k[a]) continue;
                      const std::size_t base = (o * extent + a) * inner;
                      for (std::size_t i = 0; i < inner; ++i) GX[base + i] += GY[base + i];
                    }
                });
}

template <typename Real>
NodeId triu_flatten(Graph<Real>& g, NodeId x) {
  const auto& X = g.value(x);
  if (X.rank() != 3 || X.dim(1) != X.dim(2)) throw ShapeError("triu_flatten", X.shape(), {});
  const std::size_t batch = X.dim(0), k = X.dim(1);
  const std::size_t pairs = k * (k - 1) / 2;
  if (pairs == 0) throw Error("triu_flatten: need at least two rows, got " + std::to_string(k));
  Tensor<Real> Y({batch, pairs});
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t p = 0;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j) Y[b * pairs + p++] = X[(b * k + i) * k + j];
  }
  return g.push(std::move(Y), g.requires_grad(x), [x, batch, k, pairs](Graph<Real>& g, NodeId self) {
    const auto& GY = g.grad(self);
    auto& GX = g.grad(x);
    for (std::size_t b = 0; b < batch; ++b) {
      std::size_t p = 0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) GX[(b * k + i) * k + j] += GY[b * pairs + p++];
    }
  });
}

template <typename Real>
NodeId middim_linear(Graph<Real>& g, NodeId x, NodeId w, std::optional<NodeId> b) {
  const auto& X = g.value(x);
  const auto& W = g.value(w);
  if (X.rank() != 3 || W.rank() != 2 || W.dim(0) != X.dim(1)) {
    throw ShapeError("middim_linear", X.shape(), W.shape());
  }
  const std::size_t batch = X.dim(0), nin = X.dim(1), width = X.dim(2), nout = W.dim(1);
  if (b && (g.value(*b).rank() != 1 || g.value(*b).dim(0) != nout)) {
    throw ShapeError("middim_linear", W.shape(), g.value(*b).shape());
  }
  Tensor<Real> Y({batch, nout, width});
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t o = 0; o < nout; ++o) {
      Real* y = &Y[(bi * nout + o) * width];
      if (b) std::fill_n(y, width, g.value(*b)[o]);
      for (std::size_t i = 0; i < nin; ++i) {
        const Real wv = W[i * nout + o];
        const Real* xr = &X[(bi * nin + i) * width];
        for (std::size_t d = 0; d < width; ++d) y[d] += wv * xr[d];
      }
    }
  }
  g.add_flops(2ULL * batch * nin * nout * width);
  bool rg = g.requires_grad(x) || g.requires_grad(w) || (b && g.requires_grad(*b));
  return g.push(std::move(Y), rg,
                [x, w, b, batch, nin, nout, width](Graph<Real>& g, NodeId self) {
                  const auto& GY = g.grad(self);
                  const auto& X = g.value(x);
                  const auto& W = g.value(w);
                  if (g.requires_grad(x)) {
                    auto& GX = g.grad(x);
                    for (std::size_t bi = 0; bi < batch; ++bi)
                      for (std::size_t i = 0; i < nin; ++i) {
                        Real* gx = &GX[(bi * nin + i) * width];
                        for (std::size_t o = 0; o < nout; ++o) {
                          const Real wv = W[i * nout + o];
                          const Real* gy = &GY[(bi * nout + o) * width];
                          for (std::size_t d = 0; d < width; ++d) gx[d] += wv * gy[d];
                        }
                      }
                  }
                  if (g.requires_grad(w)) {
                    auto& GW = g.grad(w);
                    for (std::size_t bi = 0; bi < batch; ++bi)
                      for (std::size_t i = 0; i < nin; ++i) {
                        const Real* xr = &X[(bi * nin + i) * width];
                        for (std::size_t o = 0; o < nout; ++o) {
                          const Real* gy = &GY[(bi * nout + o) * width];
                          Real acc = 0;
                          for (std::size_t d = 0; d < width; ++d) acc += xr[d] * gy[d];
                          GW[i * nout + o] += acc;
                        }
                      }
                  }
                  if (b && g.requires_grad(*b)) {
                    auto& GB = g.grad(*b);
                    for (std::size_t bi = 0; bi < batch; ++bi)
                      for (std::size_t o = 0; o < nout; ++o) {
                        const Real* gy = &GY[(bi * nout + o) * width];
                        for (std::size_t d = 0; d < width; ++d) GB[o] += gy[d];
                      }
                  }
                });
}

template <typename Real>
NodeId slice_middim(Graph<Real>& g, NodeId x, std::size_t begin, std::size_t end) {
  const auto& X = g.value(x);
  if (X.rank() != 3 || begin >= end || end > X.dim(1)) {
    throw ShapeError("slice_middim", X.shape(), {begin, end});
  }
  const std::size_t batch = X.dim(0), rows = X.dim(1), width = X.dim(2), n = end - begin;
  Tensor<Real> Y({batch, n, width});
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(&X[(b * rows + begin) * width], n * width, &Y[b * n * width]);
  }
  return g.push(std::move(Y), g.requires_grad(x),
                [x, batch, rows, width, begin, n](Graph<Real>& g, NodeId self) {
                  const auto& GY = g.grad(self);
                  auto& GX = g.grad(x);
                  for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t j = 0; j < n * width; ++j)
                      GX[(b * rows + begin) * width + j] += GY[b * n * width + j];
                });
}

template <typename Real>
NodeId resize_lastdim(Graph<Real>& g, NodeId x, std::size_t width) {
  const auto& X = g.value(x);
  require_rank("resize_lastdim", X, 2);
  const std::size_t batch = X.dim(0), in = X.dim(1), keep = std::min(in, width);
  Tensor<Real> Y({batch, width});
  for (std::size_t b = 0; b < batch; ++b) std::copy_n(&X[b * in], keep, &Y[b * width]);
  return g.push(std::move(Y), g.requires_grad(x),
                [x, batch, in, width, keep](Graph<Real>& g, NodeId self) {
                  const auto& GY = g.grad(self);
                  auto& GX = g.grad(x);
                  for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t j = 0; j < keep; ++j) GX[b * in + j] += GY[b * width + j];
                });
}

template <typename Real>
NodeId resize_middim(Graph<Real>& g, NodeId x, std::size_t rows) {
  const auto& X = g.value(x);
  require_rank("resize_middim", X, 3);
  const std::size_t batch = X.dim(0), in = X.dim(1), width = X.dim(2);
  const std::size_t keep = std::min(in, rows);
  Tensor<Real> Y({batch, rows, width});
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(&X[b * in * width], keep * width, &Y[b * rows * width]);
  }
  return g.push(std::move(Y), g.requires_grad(x),
                [x, batch, in, rows, width, keep](Graph<Real>& g, NodeId self) {
                  const auto& GY = g.grad(self);
                  auto& GX = g.grad(x);
                  for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t j = 0; j < keep * width; ++j)
                      GX[b * in * width + j] += GY[b * rows * width + j];
                });
}

template <typename Real>
NodeId unsqueeze_middle(Graph<Real>& g, NodeId x) {
  Tensor<Real> Y = g.value(x);
  require_rank("unsqueeze_middle", Y, 2);
  Y.reshape({Y.dim(0), 1, Y.dim(1)});
  return g.push(std::move(Y), g.requires_grad(x), [x](Graph<Real>& g, NodeId self) {
    const auto& GY = g.grad(self);
    auto& GX = g.grad(x);
    for (std::size_t i = 0; i < GY.size(); ++i) GX[i] += GY[i];
  });
}

template <typename Real>
NodeId embedding_lookup(Graph<Real>& g, std::span<Parameter<Real>* const> tables,
                        std::span<const std::uint32_t> ids, std::size_t batch) {
  const std::size_t fields = tables.size();
  if (fields == 0) throw Error("embedding_lookup: no tables");
  if (ids.size() != batch * fields) throw ShapeError("embedding_lookup", {batch, fields}, {ids.size()});
  const std::size_t width = tables[0]->value.dim(1);
  for (auto* t : tables) {
    if (t->value.rank() != 2 || t->value.dim(1) != width) {
      throw ShapeError("embedding_lookup", tables[0]->value.shape(), t->value.shape());
    }
  }
  Tensor<Real> Y({batch, fields, width});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t f = 0; f < fields; ++f) {
      const auto& T = tables[f]->value;
      const std::size_t row = ids[b * fields + f] % T.dim(0);
      std::copy_n(&T[row * width], width, &Y[(b * fields + f) * width]);
    }
  }
  bool rg = std::any_of(tables.begin(), tables.end(), [](auto* t) { return t->trainable; });
  std::vector<Parameter<Real>*> tabs(tables.begin(), tables.end());
  std::vector<std::uint32_t> idv(ids.begin(), ids.end());
  return g.push(std::move(Y), rg,
                [tabs = std::move(tabs), idv = std::move(idv), batch, fields, width](
                    Graph<Real>& g, NodeId self) {
                  const auto& GY = g.grad(self);
                  for (std::size_t f = 0; f < fields; ++f) {
                    auto* t = tabs[f];
                    if (!t->trainable) continue;
                    t->touched = true;
                    for (std::size_t b = 0; b < batch; ++b) {
                      const std::size_t row = idv[b * fields + f] % t->value.dim(0);
                      const Real* gy = &GY[(b * fields + f) * width];
                      Real* gt = &t->grad[row * width];
                      for (std::size_t d = 0; d < width; ++d) gt[d] += gy[d];
                    }
                  }
                });
}

template <typename Real>
NodeId sum_all(Graph<Real>& g, NodeId x) {
  Real total = 0;
  for (auto v : g.value(x).data()) total += v;
  return g.push(Tensor<Real>({1}, {total}), g.requires_grad(x), [x](Graph<Real>& g, NodeId self) {
    const Real gy = g.grad(self)[0];
    auto& GX = g.grad(x);
    for (auto& v : GX.vec()) v += gy;
  });
}

template <typename Real>
NodeId weighted_sum(Graph<Real>& g, NodeId x, const Tensor<Real>& weights) {
  const auto& X = g.value(x);
  if (X.shape() != weights.shape()) throw ShapeError("weighted_sum", X.shape(), weights.shape());
  Real total = 0;
  for (std::size_t i = 0; i < X.size(); ++i) total += X[i] * weights[i];
  return g.push(Tensor<Real>({1}, {total}), g.requires_grad(x),
                [x, weights](Graph<Real>& g, NodeId self) {
                  const Real gy = g.grad(self)[0];
                  auto& GX = g.grad(x);
                  for (std::size_t i = 0; i < GX.size(); ++i) GX[i] += gy * weights[i];
                });
}

template <typename Real>
NodeId bce_with_logits(Graph<Real>& g, NodeId logits, std::span<const float> labels) {
  const auto& Z = g.value(logits);
  if (Z.size() != labels.size()) throw ShapeError("bce_with_logits", Z.shape(), {labels.size()});
  const std::size_t n = Z.size();
  Real total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Real z = Z[i];
    total += std::max(z, Real(0)) - z * Real(labels[i]) + std::log1p(std::exp(-std::abs(z)));
  }
  std::vector<float> y(labels.begin(), labels.end());
  return g.push(Tensor<Real>({1}, {total / Real(n)}), g.requires_grad(logits),
                [logits, y = std::move(y), n](Graph<Real>& g, NodeId self) {
                  const Real gy = g.grad(self)[0];
                  const auto& Z = g.value(logits);
                  auto& GZ = g.grad(logits);
                  for (std::size_t i = 0; i < n; ++i) {
                    const Real p = Real(1) / (Real(1) + std::exp(-Z[i]));
                    GZ[i] += gy * (p - Real(y[i])) / Real(n);
                  }
                });
}

#define NASREC_INSTANTIATE_KERNELS(R)                                                          \
  template NodeId linear<R>(Graph<R>&, NodeId, NodeId, std::optional<NodeId>);                \
  template NodeId relu<R>(Graph<R>&, NodeId);                                                 \
  template NodeId sigmoid<R>(Graph<R>&, NodeId);                                              \
  template NodeId softmax_lastdim<R>(Graph<R>&, NodeId, std::span<const std::uint8_t>);       \
  template NodeId layer_norm<R>(Graph<R>&, NodeId, NodeId, NodeId, std::size_t, R);           \
  template NodeId concat_lastdim<R>(Graph<R>&, std::span<const NodeId>);                      \
  template NodeId concat_middim<R>(Graph<R>&, std::span<const NodeId>);                       \
  template NodeId add<R>(Graph<R>&, NodeId, NodeId);                                          \
  template NodeId add_n<R>(Graph<R>&, std::span<const NodeId>);                               \
  template NodeId elementwise_mul<R>(Graph<R>&, NodeId, NodeId);                              \
  template NodeId scale<R>(Graph<R>&, NodeId, R);                                             \
  template NodeId batched_matmul<R>(Graph<R>&, NodeId, NodeId, bool);                         \
  template NodeId mask<R>(Graph<R>&, NodeId, std::size_t, std::span<const std::uint8_t>);     \
  template NodeId triu_flatten<R>(Graph<R>&, NodeId);                                         \
  template NodeId middim_linear<R>(Graph<R>&, NodeId, NodeId, std::optional<NodeId>);         \
  template NodeId slice_middim<R>(Graph<R>&, NodeId, std::size_t, std::size_t);               \
  template NodeId resize_lastdim<R>(Graph<R>&, NodeId, std::size_t);                          \
  template NodeId resize_middim<R>(Graph<R>&, NodeId, std::size_t);                           \
  template NodeId unsqueeze_middle<R>(Graph<R>&, NodeId);                                     \
  template NodeId embedding_lookup<R>(Graph<R>&, std::span<Parameter<R>* const>,              \
                                      std::span<const std::uint32_t>, std::size_t);           \
  template NodeId sum_all<R>(Graph<R>&, NodeId);                                              \
  template NodeId weighted_sum<R>(Graph<R>&, NodeId, const Tensor<R>&);                       \
  template NodeId bce_with_logits<R>(Graph<R>&, NodeId, std::span<const float>);

NASREC_INSTANTIATE_KERNELS(float)
NASREC_INSTANTIATE_KERNELS(double)

}  // namespace nasrec
