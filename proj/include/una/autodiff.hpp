// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "una/common.hpp"
#include "una/tensor.hpp"

// Reverse-mode automatic differentiation over dense double tensors. The graph
// is a dynamic tape: every op returns a fresh node holding its value, its
// parents, and a closure that scatters gradient into them. Everything runs
// single-threaded with a fixed accumulation order, so repeated runs with the
// same seed are bit-identical.
namespace una::ad {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

struct Node;
using Value = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;
  bool requires_grad = false;
  bool grad_alloc = false;
  std::vector<Value> parents;
  std::function<void(Node&)> backprop;

  Tensor& ensure_grad() {
    if (!grad_alloc) {
      grad = Tensor(val.shape());
      grad_alloc = true;
    }
    return grad;
  }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

// RAII scope that disables graph construction (inference mode).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

inline Value constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  return n;
}

inline Value scalar(double v) { return constant(Tensor::scalar(v)); }

inline Value param(Tensor t) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->requires_grad = true;
  return n;
}

namespace detail {

inline bool track(const std::vector<Value>& parents) {
  if (!grad_mode()) return false;
  for (const auto& p : parents)
    if (p->requires_grad) return true;
  return false;
}

inline Value make(Tensor val, std::vector<Value> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  if (track(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

}  // namespace detail

// Runs reverse-mode accumulation from a scalar root. Parameter gradients are
// accumulated (+=); call zero_grad on the parameter set between steps.
inline void backward(const Value& root) {
  if (root->val.numel() != 1) throw ShapeError("backward root must be scalar");
  if (!root->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad_alloc) n->backprop(*n);
  }
}

inline double item(const Value& v) {
  if (v->val.numel() != 1) throw ShapeError("item() requires a scalar node");
  return v->val[0];
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic. A [1]-shaped operand broadcasts against any shape.
// ---------------------------------------------------------------------------

namespace detail {

enum class BinOp { Add, Sub, Mul, Div };

inline Value binary(const Value& a, const Value& b, BinOp op) {
  const bool a_scalar = a->val.numel() == 1;
  const bool b_scalar = b->val.numel() == 1;
  if (!a_scalar && !b_scalar && !a->val.same_shape(b->val))
    throw ShapeError("elementwise op on mismatched shapes " + a->val.shape_str() + " vs " +
                     b->val.shape_str());
  const Tensor& big = a_scalar ? b->val : a->val;
  Tensor out(big.shape());
  const int64_t n = out.numel();
  const double* pa = a->val.data();
  const double* pb = b->val.data();
  double* po = out.data();
  for (int64_t i = 0; i < n; ++i) {
    const double x = pa[a_scalar ? 0 : i];
    const double y = pb[b_scalar ? 0 : i];
    switch (op) {
      case BinOp::Add: po[i] = x + y; break;
      case BinOp::Sub: po[i] = x - y; break;
      case BinOp::Mul: po[i] = x * y; break;
      case BinOp::Div: po[i] = x / y; break;
    }
  }
  auto pa_node = a.get();
  auto pb_node = b.get();
  return detail::make(std::move(out), {a, b}, [pa_node, pb_node, op, a_scalar, b_scalar](Node& self) {
    const int64_t n = self.val.numel();
    const double* g = self.grad.data();
    const double* xa = pa_node->val.data();
    const double* xb = pb_node->val.data();
    if (pa_node->requires_grad) {
      double* da = pa_node->ensure_grad().data();
      for (int64_t i = 0; i < n; ++i) {
        double contrib = 0.0;
        const double y = xb[b_scalar ? 0 : i];
        switch (op) {
          case BinOp::Add: contrib = g[i]; break;
          case BinOp::Sub: contrib = g[i]; break;
          case BinOp::Mul: contrib = g[i] * y; break;
          case BinOp::Div: contrib = g[i] / y; break;
        }
        da[a_scalar ? 0 : i] += contrib;
      }
    }
    if (pb_node->requires_grad) {
      double* db = pb_node->ensure_grad().data();
      for (int64_t i = 0; i < n; ++i) {
        double contrib = 0.0;
        const double x = xa[a_scalar ? 0 : i];
        const double y = xb[b_scalar ? 0 : i];
        switch (op) {
          case BinOp::Add: contrib = g[i]; break;
          case BinOp::Sub: contrib = -g[i]; break;
          case BinOp::Mul: contrib = g[i] * x; break;
          case BinOp::Div: contrib = -g[i] * x / (y * y); break;
        }
        db[b_scalar ? 0 : i] += contrib;
      }
    }
  });
}

template <class Fwd, class Bwd>
Value unary(const Value& a, Fwd fwd, Bwd bwd_scale) {
  Tensor out(a->val.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = fwd(a->val[i]);
  Node* pa = a.get();
  return detail::make(std::move(out), {a}, [pa, bwd_scale](Node& self) {
    if (!pa->requires_grad) return;
    double* da = pa->ensure_grad().data();
    const double* g = self.grad.data();
    const double* x = pa->val.data();
    const double* y = self.val.data();
    const int64_t n = self.val.numel();
    for (int64_t i = 0; i < n; ++i) da[i] += g[i] * bwd_scale(x[i], y[i]);
  });
}

}  // namespace detail

inline Value add(const Value& a, const Value& b) { return detail::binary(a, b, detail::BinOp::Add); }
inline Value sub(const Value& a, const Value& b) { return detail::binary(a, b, detail::BinOp::Sub); }
inline Value mul(const Value& a, const Value& b) { return detail::binary(a, b, detail::BinOp::Mul); }
inline Value div(const Value& a, const Value& b) { return detail::binary(a, b, detail::BinOp::Div); }

inline Value scale(const Value& a, double c) {
  return detail::unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}
inline Value neg(const Value& a) { return scale(a, -1.0); }
inline Value add_const(const Value& a, double c) {
  return detail::unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Value relu(const Value& a) {
  return detail::unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Value leaky_relu(const Value& a, double slope) {
  return detail::unary(a, [slope](double x) { return x > 0.0 ? x : slope * x; },
                       [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

inline Value sigmoid(const Value& a) {
  return detail::unary(a,
                       [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                                      : std::exp(x) / (1.0 + std::exp(x)); },
                       [](double, double y) { return y * (1.0 - y); });
}

inline Value tanh_(const Value& a) {
  return detail::unary(a, [](double x) { return std::tanh(x); },
                       [](double, double y) { return 1.0 - y * y; });
}

// softplus(x) = log(1 + e^x), numerically stable at both tails.
inline Value softplus(const Value& a) {
  return detail::unary(a,
                       [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x))
                                                     : std::log1p(std::exp(x)); },
                       [](double x, double) {
                         return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                         : std::exp(x) / (1.0 + std::exp(x));
                       });
}

inline Value exp_(const Value& a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

// Natural log with an input floor: log(max(x, 1e-300)). The floor keeps both
// the value and the gradient finite when a loss ratio underflows.
inline Value log_guarded(const Value& a) {
  return detail::unary(a, [](double x) { return std::log(std::max(x, 1e-300)); },
                       [](double x, double) { return x > 1e-300 ? 1.0 / x : 0.0; });
}

// Base-10 log with the same floor (kept as std::log10 so the differentiable
// SI-SDR path is arithmetic-identical to the plain metric).
inline Value log10_guarded(const Value& a) {
  return detail::unary(a, [](double x) { return std::log10(std::max(x, 1e-300)); },
                       [](double x, double) { return x > 1e-300 ? 1.0 / (x * M_LN10) : 0.0; });
}

inline Value clamp(const Value& a, double lo, double hi) {
  return detail::unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                       [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

inline Value square(const Value& a) { return mul(a, a); }

// ---------------------------------------------------------------------------
// Reductions (scalar [1] results).
// ---------------------------------------------------------------------------

inline Value sum(const Value& a) {
  double acc = 0.0;
  for (int64_t i = 0; i < a->val.numel(); ++i) acc += a->val[i];
  Node* pa = a.get();
  return detail::make(Tensor::scalar(acc), {a}, [pa](Node& self) {
    if (!pa->requires_grad) return;
    double* da = pa->ensure_grad().data();
    const double g = self.grad[0];
    for (int64_t i = 0; i < pa->val.numel(); ++i) da[i] += g;
  });
}

inline Value mean(const Value& a) { return scale(sum(a), 1.0 / static_cast<double>(a->val.numel())); }

inline Value dot(const Value& a, const Value& b) {
  if (!a->val.same_shape(b->val)) throw ShapeError("dot on mismatched shapes");
  double acc = 0.0;
  for (int64_t i = 0; i < a->val.numel(); ++i) acc += a->val[i] * b->val[i];
  Node* pa = a.get();
  Node* pb = b.get();
  return detail::make(Tensor::scalar(acc), {a, b}, [pa, pb](Node& self) {
    const double g = self.grad[0];
    const int64_t n = pa->val.numel();
    if (pa->requires_grad) {
      double* da = pa->ensure_grad().data();
      for (int64_t i = 0; i < n; ++i) da[i] += g * pb->val[i];
    }
    if (pb->requires_grad) {
      double* db = pb->ensure_grad().data();
      for (int64_t i = 0; i < n; ++i) db[i] += g * pa->val[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Shape ops.
// ---------------------------------------------------------------------------

inline Value reshape(const Value& a, std::vector<int64_t> shape) {
  Tensor out = a->val.reshaped(std::move(shape));
  Node* pa = a.get();
  return detail::make(std::move(out), {a}, [pa](Node& self) {
    if (!pa->requires_grad) return;
    double* da = pa->ensure_grad().data();
    for (int64_t i = 0; i < self.val.numel(); ++i) da[i] += self.grad[i];
  });
}

// Zero-pads columns of a rank-2 tensor on the right.
inline Value pad_cols_right(const Value& a, int64_t extra) {
  if (a->val.rank() != 2) throw ShapeError("pad_cols_right expects rank-2");
  if (extra < 0) throw ShapeError("negative padding");
  const int64_t rows = a->val.dim(0), cols = a->val.dim(1);
  Tensor out({rows, cols + extra});
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) out.at(i, j) = a->val.at(i, j);
  Node* pa = a.get();
  return detail::make(std::move(out), {a}, [pa, rows, cols](Node& self) {
    if (!pa->requires_grad) return;
    auto& da = pa->ensure_grad();
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < cols; ++j) da.at(i, j) += self.grad.at(i, j);
  });
}

// Column window [start, start+len) of a rank-2 tensor.
inline Value slice_cols(const Value& a, int64_t start, int64_t len) {
  if (a->val.rank() != 2) throw ShapeError("slice_cols expects rank-2");
  const int64_t rows = a->val.dim(0), cols = a->val.dim(1);
  if (start < 0 || len < 0 || start + len > cols) throw ShapeError("slice_cols out of range");
  Tensor out({rows, len});
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < len; ++j) out.at(i, j) = a->val.at(i, start + j);
  Node* pa = a.get();
  return detail::make(std::move(out), {a}, [pa, start, rows, len](Node& self) {
    if (!pa->requires_grad) return;
    auto& da = pa->ensure_grad();
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < len; ++j) da.at(i, start + j) += self.grad.at(i, j);
  });
}

inline Value transpose2d(const Value& a) {
  if (a->val.rank() != 2) throw ShapeError("transpose2d expects rank-2");
  const int64_t m = a->val.dim(0), n = a->val.dim(1);
  Tensor out({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.at(j, i) = a->val.at(i, j);
  Node* pa = a.get();
  return detail::make(std::move(out), {a}, [pa, m, n](Node& self) {
    if (!pa->requires_grad) return;
    auto& da = pa->ensure_grad();
    for (int64_t j = 0; j < n; ++j)
      for (int64_t i = 0; i < m; ++i) da.at(i, j) += self.grad.at(j, i);
  });
}

// ---------------------------------------------------------------------------
// Matrix ops (Eigen-backed).
// ---------------------------------------------------------------------------

inline Value matmul(const Value& a, const Value& b) {
  if (a->val.rank() != 2 || b->val.rank() != 2 || a->val.dim(1) != b->val.dim(0))
    throw ShapeError("matmul shape mismatch " + a->val.shape_str() + " x " + b->val.shape_str());
  const int64_t m = a->val.dim(0), k = a->val.dim(1), n = b->val.dim(1);
  Tensor out({m, n});
  {
    ECMap A(a->val.data(), m, k), B(b->val.data(), k, n);
    EMap C(out.data(), m, n);
    C.noalias() = A * B;
  }
  Node* pa = a.get();
  Node* pb = b.get();
  return detail::make(std::move(out), {a, b}, [pa, pb, m, k, n](Node& self) {
    ECMap G(self.grad.data(), m, n);
    if (pa->requires_grad) {
      ECMap B(pb->val.data(), k, n);
      EMap dA(pa->ensure_grad().data(), m, k);
      dA.noalias() += G * B.transpose();
    }
    if (pb->requires_grad) {
      ECMap A(pa->val.data(), m, k);
      EMap dB(pb->ensure_grad().data(), k, n);
      dB.noalias() += A.transpose() * G;
    }
  });
}

// y[i, :] = x[i, :] + v
inline Value add_rowvec(const Value& x, const Value& v) {
  if (x->val.rank() != 2 || v->val.rank() != 1 || x->val.dim(1) != v->val.dim(0))
    throw ShapeError("add_rowvec shape mismatch");
  const int64_t n = x->val.dim(0), m = x->val.dim(1);
  Tensor out({n, m});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) out.at(i, j) = x->val.at(i, j) + v->val[j];
  Node* px = x.get();
  Node* pv = v.get();
  return detail::make(std::move(out), {x, v}, [px, pv, n, m](Node& self) {
    if (px->requires_grad) {
      double* dx = px->ensure_grad().data();
      for (int64_t i = 0; i < n * m; ++i) dx[i] += self.grad[i];
    }
    if (pv->requires_grad) {
      double* dv = pv->ensure_grad().data();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) dv[j] += self.grad.at(i, j);
    }
  });
}

inline Value softmax_rows(const Value& a) {
  if (a->val.rank() != 2) throw ShapeError("softmax_rows expects rank-2");
  const int64_t n = a->val.dim(0), m = a->val.dim(1);
  Tensor out({n, m});
  for (int64_t i = 0; i < n; ++i) {
    double mx = -1e300;
    for (int64_t j = 0; j < m; ++j) mx = std::max(mx, a->val.at(i, j));
    double z = 0.0;
    for (int64_t j = 0; j < m; ++j) {
      const double e = std::exp(a->val.at(i, j) - mx);
      out.at(i, j) = e;
      z += e;
    }
    for (int64_t j = 0; j < m; ++j) out.at(i, j) /= z;
  }
  Node* pa = a.get();
  return detail::make(std::move(out), {a}, [pa, n, m](Node& self) {
    if (!pa->requires_grad) return;
    auto& da = pa->ensure_grad();
    for (int64_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int64_t j = 0; j < m; ++j) acc += self.grad.at(i, j) * self.val.at(i, j);
      for (int64_t j = 0; j < m; ++j)
        da.at(i, j) += self.val.at(i, j) * (self.grad.at(i, j) - acc);
    }
  });
}

// Rows of x scaled to unit L2 norm (rows below `eps` norm are scaled by 1/eps).
inline Value l2_normalize_rows(const Value& a, double eps = 1e-12) {
  if (a->val.rank() != 2) throw ShapeError("l2_normalize_rows expects rank-2");
  const int64_t n = a->val.dim(0), m = a->val.dim(1);
  Tensor out({n, m});
  std::vector<double> norms(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < m; ++j) acc += a->val.at(i, j) * a->val.at(i, j);
    const double r = std::max(std::sqrt(acc), eps);
    norms[static_cast<size_t>(i)] = r;
    for (int64_t j = 0; j < m; ++j) out.at(i, j) = a->val.at(i, j) / r;
  }
  Node* pa = a.get();
  return detail::make(std::move(out), {a}, [pa, n, m, norms](Node& self) {
    if (!pa->requires_grad) return;
    auto& da = pa->ensure_grad();
    for (int64_t i = 0; i < n; ++i) {
      const double r = norms[static_cast<size_t>(i)];
      double proj = 0.0;
      for (int64_t j = 0; j < m; ++j) proj += self.grad.at(i, j) * self.val.at(i, j);
      for (int64_t j = 0; j < m; ++j)
        da.at(i, j) += (self.grad.at(i, j) - self.val.at(i, j) * proj) / r;
    }
  });
}

// Extracts channel vectors at the given flat spatial sites: x may be [C, N] or
// [C, H, W] (flattened internally); the result is [n_sites, C].
inline Value gather_sites(const Value& x, std::vector<int64_t> sites) {
  if (x->val.rank() != 2 && x->val.rank() != 3) throw ShapeError("gather_sites expects rank 2 or 3");
  const int64_t C = x->val.dim(0);
  const int64_t N = x->val.numel() / C;
  const int64_t n = static_cast<int64_t>(sites.size());
  for (int64_t s : sites)
    if (s < 0 || s >= N) throw ShapeError("gather site out of range");
  Tensor out({n, C});
  const double* px = x->val.data();
  for (int64_t p = 0; p < n; ++p)
    for (int64_t c = 0; c < C; ++c) out.at(p, c) = px[c * N + sites[static_cast<size_t>(p)]];
  Node* pxn = x.get();
  return detail::make(std::move(out), {x}, [pxn, sites = std::move(sites), C, N](Node& self) {
    if (!pxn->requires_grad) return;
    double* dx = pxn->ensure_grad().data();
    const int64_t n = static_cast<int64_t>(sites.size());
    for (int64_t p = 0; p < n; ++p)
      for (int64_t c = 0; c < C; ++c) dx[c * N + sites[static_cast<size_t>(p)]] += self.grad.at(p, c);
  });
}

// Mean InfoNCE cross-entropy for one layer's patch set. Row i of `query` and
// `key` hold embeddings of the patch pair at the same spatial site; logits are
// pairwise dot products over the key set divided by tau, and the softmax
// target for query i is key i.
inline Value nce_loss(const Value& query, const Value& key, double tau) {
  if (query->val.rank() != 2 || !query->val.same_shape(key->val))
    throw ShapeError("nce_loss expects matching [n, d] embeddings");
  const int64_t n = query->val.dim(0), d = query->val.dim(1);
  if (n < 2) throw DegenerateNce("need at least 2 patches for contrastive loss");
  if (tau <= 0.0) throw InvalidConfig("temperature must be positive");

  Tensor logits({n, n});
  {
    ECMap Q(query->val.data(), n, d), K(key->val.data(), n, d);
    EMap L(logits.data(), n, n);
    L.noalias() = Q * K.transpose() / tau;
  }
  // Row softmax with the diagonal as target class.
  Tensor probs({n, n});
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double mx = -1e300;
    for (int64_t j = 0; j < n; ++j) mx = std::max(mx, logits.at(i, j));
    double z = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const double e = std::exp(logits.at(i, j) - mx);
      probs.at(i, j) = e;
      z += e;
    }
    for (int64_t j = 0; j < n; ++j) probs.at(i, j) /= z;
    loss += std::log(z) + mx - logits.at(i, i);
  }
  loss /= static_cast<double>(n);

  Node* pq = query.get();
  Node* pk = key.get();
  return detail::make(Tensor::scalar(loss), {query, key},
                      [pq, pk, probs = std::move(probs), n, d, tau](Node& self) {
    const double g = self.grad[0] / (static_cast<double>(n) * tau);
    Tensor dlogits({n, n});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j)
        dlogits.at(i, j) = g * (probs.at(i, j) - (i == j ? 1.0 : 0.0));
    ECMap dL(dlogits.data(), n, n);
    if (pq->requires_grad) {
      ECMap K(pk->val.data(), n, d);
      EMap dQ(pq->ensure_grad().data(), n, d);
      dQ.noalias() += dL * K;
    }
    if (pk->requires_grad) {
      ECMap Q(pq->val.data(), n, d);
      EMap dK(pk->ensure_grad().data(), n, d);
      dK.noalias() += dL.transpose() * Q;
    }
  });
}

// mean(log sigmoid(x)): the building block of the adversarial objectives.
inline Value mean_log_sigmoid(const Value& logits) { return neg(mean(softplus(neg(logits)))); }

}  // namespace una::ad
