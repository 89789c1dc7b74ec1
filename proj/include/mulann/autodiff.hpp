#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every executed operation in execution order. Leaves are either
// constants or parameters bound to an external Tensor; backward() walks the
// record once in reverse and accumulates into the bound parameters' grad slots.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mulann/tensor.hpp"

namespace mulann {

enum class OpKind {
  constant,
  parameter,
  matmul,
  add_bias,
  relu,
  conv2d,
  maxpool2d,
  flatten,
  softmax,
  log_softmax,
  cross_entropy,
  binary_cross_entropy,
  scale,
  grl,
  gather_rows,
  add,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::constant: return "constant";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::add_bias: return "add_bias";
    case OpKind::relu: return "relu";
    case OpKind::conv2d: return "conv2d";
    case OpKind::maxpool2d: return "maxpool2d";
    case OpKind::flatten: return "flatten";
    case OpKind::softmax: return "softmax";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::cross_entropy: return "cross_entropy";
    case OpKind::binary_cross_entropy: return "binary_cross_entropy";
    case OpKind::scale: return "scale";
    case OpKind::grl: return "grl";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::add: return "add";
  }
  return "?";
}

/// Floor applied to probabilities before an explicit log.
inline constexpr double kProbFloor = 1e-12;

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  double item() const;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const std::vector<double>& out_grad)>;

  struct Record {
    OpKind kind;
    std::vector<std::size_t> inputs;
    std::size_t output;
  };

  /// With grad_enabled == false parameters are bound as constants and no
  /// backward closures are kept (inference).
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t) {
    return push(OpKind::constant, {}, std::move(t), nullptr, false);
  }

  /// Binds an external tensor as a leaf. After backward() its grad slot holds
  /// the accumulated gradient (created if absent).
  Var parameter(Tensor& p) {
    Var v = push(OpKind::parameter, {}, p, nullptr, grad_enabled_ && p.requires_grad);
    nodes_[v.id].param = &p;
    return v;
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }

  /// Gradient of the last backward() target w.r.t. node v (zeros if unreachable).
  std::vector<double> grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
    return n.grad;
  }

  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

  const std::vector<Record>& records() const { return records_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t last_backward_visits() const { return visits_; }

  void backward(Var loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: loss belongs to another tape");
    if (consumed_) throw std::logic_error("backward: tape already consumed");
    const Tensor& lv = nodes_.at(loss.id).value;
    if (lv.size() != 1)
      throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(lv.shape));
    consumed_ = true;
    visits_ = 0;
    nodes_[loss.id].grad.assign(1, 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.needs_grad) continue;
      if (n.backward) {
        ++visits_;
        // Copy: the callback may grow other nodes' grad buffers but never this one.
        const std::vector<double> g = n.grad;
        n.backward(*this, g);
      }
      if (n.param) {
        if (!n.param->grad) n.param->grad.emplace(n.param->size(), 0.0);
        auto& pg = *n.param->grad;
        for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
      }
    }
  }

  // ---- used by op implementations ----

  Var push(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn fn,
           bool needs_grad) {
    Node n;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    n.value.grad.reset();
    n.needs_grad = needs_grad;
    n.backward = needs_grad ? std::move(fn) : nullptr;
    nodes_.push_back(std::move(n));
    const std::size_t id = nodes_.size() - 1;
    if (kind != OpKind::constant && kind != OpKind::parameter)
      records_.push_back({kind, nodes_.back().inputs, id});
    return Var{this, id};
  }

  bool any_needs_grad(std::initializer_list<Var> vs) const {
    for (Var v : vs)
      if (nodes_.at(v.id).needs_grad) return true;
    return false;
  }

  /// Adds `g` into node v's gradient buffer if v participates in differentiation.
  void accumulate(Var v, std::span<const double> g) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return;
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k) n.grad[k] += g[k];
  }

  /// Direct access for ops that scatter sparsely.
  std::vector<double>* grad_buffer(Var v) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return nullptr;
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return &n.grad;
  }

 private:
  struct Node {
    OpKind kind = OpKind::constant;
    std::vector<std::size_t> inputs;
    Tensor value;
    std::vector<double> grad;
    Tensor* param = nullptr;
    bool needs_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<Record> records_;
  bool grad_enabled_ = true;
  bool consumed_ = false;
  std::size_t visits_ = 0;
};

inline const Tensor& Var::value() const { return tape->value(*this); }
inline double Var::item() const {
  const Tensor& t = value();
  if (t.size() != 1) throw ShapeError("item: not a scalar " + shape_str(t.shape));
  return t[0];
}

namespace detail {

[[noreturn]] inline void shape_fail(const char* op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

inline void require_rank(const char* op, const Tensor& t, std::size_t rank, const char* arg) {
  if (t.rank() != rank)
    shape_fail(op, std::string(arg) + " must have rank " + std::to_string(rank) + ", got " +
                       shape_str(t.shape));
}

inline void same_tape(const char* op, Var a, Var b) {
  if (a.tape != b.tape) shape_fail(op, "inputs live on different tapes");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// [m,k] x [k,n] -> [m,n]
inline Var matmul(Var a, Var b) {
  detail::same_tape("matmul", a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  detail::require_rank("matmul", A, 2, "lhs");
  detail::require_rank("matmul", B, 2, "rhs");
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  if (B.dim(0) != k)
    detail::shape_fail("matmul", "inner dimensions differ: lhs " + shape_str(A.shape) +
                                     " vs rhs " + shape_str(B.shape));
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A.values[i * k + p];
      if (av == 0.0) continue;
      const double* brow = &B.values[p * n];
      double* orow = &out.values[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  Tape& t = *a.tape;
  return t.push(OpKind::matmul, {a.id, b.id}, std::move(out),
                [a, b, m, k, n](Tape& tp, const std::vector<double>& g) {
                  const Tensor& A = a.value();
                  const Tensor& B = b.value();
                  if (auto* ga = tp.grad_buffer(a)) {
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t p = 0; p < k; ++p) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B.values[p * n + j];
                        (*ga)[i * k + p] += s;
                      }
                  }
                  if (auto* gb = tp.grad_buffer(b)) {
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t p = 0; p < k; ++p) {
                        const double av = A.values[i * k + p];
                        if (av == 0.0) continue;
                        for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += av * g[i * n + j];
                      }
                  }
                },
                t.any_needs_grad({a, b}));
}

/// [m,n] + [n] broadcast over rows.
inline Var add_bias(Var x, Var bias) {
  detail::same_tape("add_bias", x, bias);
  const Tensor& X = x.value();
  const Tensor& b = bias.value();
  detail::require_rank("add_bias", X, 2, "input");
  if (b.size() != X.dim(1))
    detail::shape_fail("add_bias", "bias length " + std::to_string(b.size()) +
                                       " does not match input width " + std::to_string(X.dim(1)));
  Tensor out = X;
  const std::size_t m = X.dim(0), n = X.dim(1);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.values[i * n + j] += b.values[j];
  Tape& t = *x.tape;
  return t.push(OpKind::add_bias, {x.id, bias.id}, std::move(out),
                [x, bias, m, n](Tape& tp, const std::vector<double>& g) {
                  tp.accumulate(x, g);
                  if (auto* gb = tp.grad_buffer(bias))
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) (*gb)[j] += g[i * n + j];
                },
                t.any_needs_grad({x, bias}));
}

/// Elementwise max(0, x); the subgradient at exactly 0 is 0.
inline Var relu(Var x) {
  const Tensor& X = x.value();
  Tensor out = X;
  for (double& v : out.values) v = v > 0.0 ? v : 0.0;
  Tape& t = *x.tape;
  return t.push(OpKind::relu, {x.id}, std::move(out),
                [x](Tape& tp, const std::vector<double>& g) {
                  const Tensor& X = x.value();
                  std::vector<double> gx(g.size());
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] = X.values[i] > 0.0 ? g[i] : 0.0;
                  tp.accumulate(x, gx);
                },
                t.any_needs_grad({x}));
}

/// Valid (unpadded), stride-1 convolution.
/// x: [N,C,H,W], w: [O,C,K,K], b: [O] -> [N,O,H-K+1,W-K+1]
inline Var conv2d(Var x, Var w, Var b) {
  detail::same_tape("conv2d", x, w);
  detail::same_tape("conv2d", x, b);
  const Tensor& X = x.value();
  const Tensor& W = w.value();
  const Tensor& B = b.value();
  detail::require_rank("conv2d", X, 4, "input");
  detail::require_rank("conv2d", W, 4, "kernel");
  const std::size_t N = X.dim(0), C = X.dim(1), H = X.dim(2), Wd = X.dim(3);
  const std::size_t O = W.dim(0), K = W.dim(2);
  if (W.dim(1) != C)
    detail::shape_fail("conv2d", "kernel expects " + std::to_string(W.dim(1)) +
                                     " input channels, input has " + std::to_string(C));
  if (W.dim(3) != K) detail::shape_fail("conv2d", "kernel must be square, got " + shape_str(W.shape));
  if (K > H || K > Wd)
    detail::shape_fail("conv2d", "kernel " + std::to_string(K) + "x" + std::to_string(K) +
                                     " larger than input plane " + std::to_string(H) + "x" +
                                     std::to_string(Wd));
  if (B.size() != O)
    detail::shape_fail("conv2d", "bias length " + std::to_string(B.size()) + " != out channels " +
                                     std::to_string(O));
  const std::size_t OH = H - K + 1, OW = Wd - K + 1;
  Tensor out(Shape{N, O, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o) {
      double* op = &out.values[((n * O + o) * OH) * OW];
      for (std::size_t i = 0; i < OH * OW; ++i) op[i] = B.values[o];
      for (std::size_t c = 0; c < C; ++c) {
        const double* xp = &X.values[((n * C + c) * H) * Wd];
        const double* wp = &W.values[((o * C + c) * K) * K];
        for (std::size_t ky = 0; ky < K; ++ky)
          for (std::size_t kx = 0; kx < K; ++kx) {
            const double wv = wp[ky * K + kx];
            for (std::size_t oy = 0; oy < OH; ++oy) {
              const double* xrow = xp + (oy + ky) * Wd + kx;
              double* orow = op + oy * OW;
              for (std::size_t ox = 0; ox < OW; ++ox) orow[ox] += wv * xrow[ox];
            }
          }
      }
    }
  Tape& t = *x.tape;
  return t.push(
      OpKind::conv2d, {x.id, w.id, b.id}, std::move(out),
      [x, w, b, N, C, H, Wd, O, K, OH, OW](Tape& tp, const std::vector<double>& g) {
        const Tensor& X = x.value();
        const Tensor& W = w.value();
        auto* gx = tp.grad_buffer(x);
        auto* gw = tp.grad_buffer(w);
        auto* gb = tp.grad_buffer(b);
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t o = 0; o < O; ++o) {
            const double* gp = &g[((n * O + o) * OH) * OW];
            if (gb)
              for (std::size_t i = 0; i < OH * OW; ++i) (*gb)[o] += gp[i];
            for (std::size_t c = 0; c < C; ++c) {
              const std::size_t xoff = ((n * C + c) * H) * Wd;
              const std::size_t woff = ((o * C + c) * K) * K;
              for (std::size_t ky = 0; ky < K; ++ky)
                for (std::size_t kx = 0; kx < K; ++kx) {
                  double acc = 0.0;
                  const double wv = W.values[woff + ky * K + kx];
                  for (std::size_t oy = 0; oy < OH; ++oy) {
                    const std::size_t xr = xoff + (oy + ky) * Wd + kx;
                    const double* grow = gp + oy * OW;
                    for (std::size_t ox = 0; ox < OW; ++ox) {
                      acc += grow[ox] * X.values[xr + ox];
                      if (gx) (*gx)[xr + ox] += grow[ox] * wv;
                    }
                  }
                  if (gw) (*gw)[woff + ky * K + kx] += acc;
                }
            }
          }
      },
      t.any_needs_grad({x, w, b}));
}

/// 2x2 max pooling with stride 2 over [N,C,H,W]; trailing odd rows/cols are dropped.
/// Ties resolve to the first maximum in row-major window order.
inline Var maxpool2d(Var x) {
  const Tensor& X = x.value();
  detail::require_rank("maxpool2d", X, 4, "input");
  const std::size_t N = X.dim(0), C = X.dim(1), H = X.dim(2), Wd = X.dim(3);
  if (H < 2 || Wd < 2)
    detail::shape_fail("maxpool2d", "input plane " + std::to_string(H) + "x" + std::to_string(Wd) +
                                        " smaller than the 2x2 window");
  const std::size_t OH = H / 2, OW = Wd / 2;
  Tensor out(Shape{N, C, OH, OW});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < N * C; ++p)
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox) {
        std::size_t best = p * H * Wd + (2 * oy) * Wd + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = p * H * Wd + (2 * oy + dy) * Wd + 2 * ox + dx;
            if (X.values[idx] > X.values[best]) best = idx;
          }
        const std::size_t o = (p * OH + oy) * OW + ox;
        out.values[o] = X.values[best];
        argmax[o] = best;
      }
  Tape& t = *x.tape;
  return t.push(OpKind::maxpool2d, {x.id}, std::move(out),
                [x, argmax = std::move(argmax)](Tape& tp, const std::vector<double>& g) {
                  if (auto* gx = tp.grad_buffer(x))
                    for (std::size_t o = 0; o < g.size(); ++o) (*gx)[argmax[o]] += g[o];
                },
                t.any_needs_grad({x}));
}

/// [N, ...] -> [N, prod(...)]
inline Var flatten(Var x) {
  const Tensor& X = x.value();
  if (X.rank() < 2) detail::shape_fail("flatten", "input needs a batch axis, got " + shape_str(X.shape));
  Tensor out(Shape{X.dim(0), X.size() / X.dim(0)}, X.values);
  Tape& t = *x.tape;
  return t.push(OpKind::flatten, {x.id}, std::move(out),
                [x](Tape& tp, const std::vector<double>& g) { tp.accumulate(x, g); },
                t.any_needs_grad({x}));
}

/// Reinterprets [N, C*H*W] as [N,C,H,W]. Recorded as a flatten (same data, new view).
inline Var reshape_rows(Var x, Shape per_row) {
  const Tensor& X = x.value();
  detail::require_rank("reshape_rows", X, 2, "input");
  if (shape_numel(per_row) != X.dim(1))
    detail::shape_fail("reshape_rows", "row width " + std::to_string(X.dim(1)) + " != " +
                                           shape_str(per_row));
  Shape s{X.dim(0)};
  s.insert(s.end(), per_row.begin(), per_row.end());
  Tensor out(std::move(s), X.values);
  Tape& t = *x.tape;
  return t.push(OpKind::flatten, {x.id}, std::move(out),
                [x](Tape& tp, const std::vector<double>& g) { tp.accumulate(x, g); },
                t.any_needs_grad({x}));
}

namespace detail {

inline void row_log_softmax(const double* in, double* out, std::size_t n) {
  double mx = in[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += std::exp(in[j] - mx);
  const double lse = mx + std::log(s);
  for (std::size_t j = 0; j < n; ++j) out[j] = in[j] - lse;
}

}  // namespace detail

/// Row-wise softmax of [m,n]; values-only helper for inference paths.
inline Tensor softmax_values(const Tensor& X) {
  detail::require_rank("softmax", X, 2, "input");
  Tensor out(X.shape);
  const std::size_t m = X.dim(0), n = X.dim(1);
  for (std::size_t i = 0; i < m; ++i) {
    detail::row_log_softmax(&X.values[i * n], &out.values[i * n], n);
    for (std::size_t j = 0; j < n; ++j) out.values[i * n + j] = std::exp(out.values[i * n + j]);
  }
  return out;
}

inline Var softmax(Var x) {
  Tensor out = softmax_values(x.value());
  const std::size_t m = out.dim(0), n = out.dim(1);
  Tensor saved = out;
  Tape& t = *x.tape;
  return t.push(OpKind::softmax, {x.id}, std::move(out),
                [x, y = std::move(saved), m, n](Tape& tp, const std::vector<double>& g) {
                  std::vector<double> gx(m * n);
                  for (std::size_t i = 0; i < m; ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y.values[i * n + j];
                    for (std::size_t j = 0; j < n; ++j)
                      gx[i * n + j] = y.values[i * n + j] * (g[i * n + j] - dot);
                  }
                  tp.accumulate(x, gx);
                },
                t.any_needs_grad({x}));
}

inline Var log_softmax(Var x) {
  const Tensor& X = x.value();
  detail::require_rank("log_softmax", X, 2, "input");
  const std::size_t m = X.dim(0), n = X.dim(1);
  Tensor out(X.shape);
  for (std::size_t i = 0; i < m; ++i) detail::row_log_softmax(&X.values[i * n], &out.values[i * n], n);
  Tensor saved = out;
  Tape& t = *x.tape;
  return t.push(OpKind::log_softmax, {x.id}, std::move(out),
                [x, ls = std::move(saved), m, n](Tape& tp, const std::vector<double>& g) {
                  std::vector<double> gx(m * n);
                  for (std::size_t i = 0; i < m; ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += g[i * n + j];
                    for (std::size_t j = 0; j < n; ++j)
                      gx[i * n + j] = g[i * n + j] - std::exp(ls.values[i * n + j]) * s;
                  }
                  tp.accumulate(x, gx);
                },
                t.any_needs_grad({x}));
}

/// Weighted multi-class cross-entropy on logits [m,L]:
///   sum_s weights[s] * (-log softmax(logits)_s[labels[s]]) / normalizer.
/// Computed through a fused log-softmax.
inline Var weighted_cross_entropy(Var logits, std::span<const std::size_t> labels,
                                  std::span<const double> weights, double normalizer) {
  const Tensor& Z = logits.value();
  detail::require_rank("cross_entropy", Z, 2, "logits");
  const std::size_t m = Z.dim(0), L = Z.dim(1);
  if (labels.size() != m || weights.size() != m)
    detail::shape_fail("cross_entropy", "batch has " + std::to_string(m) + " rows but " +
                                            std::to_string(labels.size()) + " labels / " +
                                            std::to_string(weights.size()) + " weights");
  if (!(normalizer > 0.0)) detail::shape_fail("cross_entropy", "normalizer must be positive");
  Tensor ls(Z.shape);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] >= L)
      detail::shape_fail("cross_entropy", "label " + std::to_string(labels[i]) + " out of range for " +
                                              std::to_string(L) + " classes");
    detail::row_log_softmax(&Z.values[i * L], &ls.values[i * L], L);
    loss -= weights[i] * ls.values[i * L + labels[i]];
  }
  loss /= normalizer;
  Tape& t = *logits.tape;
  return t.push(
      OpKind::cross_entropy, {logits.id}, Tensor::scalar(loss),
      [logits, ls = std::move(ls), lab = std::vector<std::size_t>(labels.begin(), labels.end()),
       w = std::vector<double>(weights.begin(), weights.end()), normalizer, m,
       L](Tape& tp, const std::vector<double>& g) {
        std::vector<double> gz(m * L);
        const double s = g[0] / normalizer;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < L; ++j)
            gz[i * L + j] = s * w[i] * (std::exp(ls.values[i * L + j]) - (j == lab[i] ? 1.0 : 0.0));
        tp.accumulate(logits, gz);
      },
      t.any_needs_grad({logits}));
}

/// Mean multi-class cross-entropy on logits.
inline Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const std::size_t m = logits.value().rank() ? logits.value().dim(0) : 0;
  std::vector<double> w(m, 1.0);
  return weighted_cross_entropy(logits, labels, w, static_cast<double>(m));
}

namespace detail {
// log(sigmoid(z)) and log(1 - sigmoid(z)) without overflow.
inline double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }
inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}
}  // namespace detail

inline double sigmoid(double z) { return detail::sigmoid(z); }

/// Weighted binary cross-entropy on logits [m,1] with targets in [0,1].
inline Var weighted_binary_cross_entropy(Var logits, std::span<const double> targets,
                                         std::span<const double> weights, double normalizer) {
  const Tensor& Z = logits.value();
  detail::require_rank("binary_cross_entropy", Z, 2, "logits");
  if (Z.dim(1) != 1)
    detail::shape_fail("binary_cross_entropy", "expects a single logit column, got " + shape_str(Z.shape));
  const std::size_t m = Z.dim(0);
  if (targets.size() != m || weights.size() != m)
    detail::shape_fail("binary_cross_entropy", "batch has " + std::to_string(m) + " rows but " +
                                                   std::to_string(targets.size()) + " targets / " +
                                                   std::to_string(weights.size()) + " weights");
  if (!(normalizer > 0.0)) detail::shape_fail("binary_cross_entropy", "normalizer must be positive");
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double z = Z.values[i], y = targets[i];
    loss -= weights[i] * (y * detail::log_sigmoid(z) + (1.0 - y) * detail::log_sigmoid(-z));
  }
  loss /= normalizer;
  Tape& t = *logits.tape;
  return t.push(OpKind::binary_cross_entropy, {logits.id}, Tensor::scalar(loss),
                [logits, y = std::vector<double>(targets.begin(), targets.end()),
                 w = std::vector<double>(weights.begin(), weights.end()), normalizer,
                 m](Tape& tp, const std::vector<double>& g) {
                  const Tensor& Z = logits.value();
                  std::vector<double> gz(m);
                  for (std::size_t i = 0; i < m; ++i)
                    gz[i] = g[0] / normalizer * w[i] * (detail::sigmoid(Z.values[i]) - y[i]);
                  tp.accumulate(logits, gz);
                },
                t.any_needs_grad({logits}));
}

/// Mean binary cross-entropy on logits.
inline Var binary_cross_entropy(Var logits, std::span<const double> targets) {
  const std::size_t m = logits.value().rank() ? logits.value().dim(0) : 0;
  std::vector<double> w(m, 1.0);
  return weighted_binary_cross_entropy(logits, targets, w, static_cast<double>(m));
}

inline Var scale(Var x, double c) {
  Tensor out = x.value();
  for (double& v : out.values) v *= c;
  Tape& t = *x.tape;
  return t.push(OpKind::scale, {x.id}, std::move(out),
                [x, c](Tape& tp, const std::vector<double>& g) {
                  std::vector<double> gx(g);
                  for (double& v : gx) v *= c;
                  tp.accumulate(x, gx);
                },
                t.any_needs_grad({x}));
}

/// Gradient reversal: identity forward, multiplies the incoming gradient by -lambda.
inline Var grl(Var x, double lambda) {
  if (!std::isfinite(lambda)) throw std::invalid_argument("grl: lambda must be finite");
  Tensor out = x.value();
  Tape& t = *x.tape;
  return t.push(OpKind::grl, {x.id}, std::move(out),
                [x, lambda](Tape& tp, const std::vector<double>& g) {
                  std::vector<double> gx(g);
                  for (double& v : gx) v *= -lambda;
                  tp.accumulate(x, gx);
                },
                t.any_needs_grad({x}));
}

/// Selects rows (first axis) of x in the given order; indices may repeat.
inline Var gather_rows(Var x, std::span<const std::size_t> rows) {
  const Tensor& X = x.value();
  if (X.rank() < 1) detail::shape_fail("gather_rows", "scalar input");
  if (rows.empty()) detail::shape_fail("gather_rows", "empty row selection");
  const std::size_t width = X.size() / X.dim(0);
  Shape s = X.shape;
  s[0] = rows.size();
  Tensor out(s);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= X.dim(0))
      detail::shape_fail("gather_rows", "row " + std::to_string(rows[r]) + " out of range for " +
                                            std::to_string(X.dim(0)) + " rows");
    std::copy_n(&X.values[rows[r] * width], width, &out.values[r * width]);
  }
  Tape& t = *x.tape;
  return t.push(OpKind::gather_rows, {x.id}, std::move(out),
                [x, idx = std::vector<std::size_t>(rows.begin(), rows.end()),
                 width](Tape& tp, const std::vector<double>& g) {
                  if (auto* gx = tp.grad_buffer(x))
                    for (std::size_t r = 0; r < idx.size(); ++r)
                      for (std::size_t k = 0; k < width; ++k) (*gx)[idx[r] * width + k] += g[r * width + k];
                },
                t.any_needs_grad({x}));
}

/// Elementwise sum of equally shaped tensors.
inline Var add(Var a, Var b) {
  detail::same_tape("add", a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape != B.shape)
    detail::shape_fail("add", "shapes differ: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += B.values[i];
  Tape& t = *a.tape;
  return t.push(OpKind::add, {a.id, b.id}, std::move(out),
                [a, b](Tape& tp, const std::vector<double>& g) {
                  tp.accumulate(a, g);
                  tp.accumulate(b, g);
                },
                t.any_needs_grad({a, b}));
}

}  // namespace mulann
