#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "mcqa/error.hpp"
#include "mcqa/param_store.hpp"
#include "mcqa/tensor.hpp"

namespace mcqa {

// Define-by-run reverse-mode differentiation over rank-1/rank-2 tensors.
//
// A Tape is the computation record for one forward pass: every operation
// appends a node (inputs, op kind, cached output) in execution order, so the
// record is topological by construction. backward() sweeps the nodes in
// reverse, accumulating adjoints, and finally adds the adjoints of parameter
// leaves into the bound ParameterStore. The tape is rebuilt per forward pass
// and confined to one thread while a pass is active.

using NodeId = std::int32_t;

namespace testing {
// Fault-injection hook: scales the tanh backward rule. Exists so gradient
// verification can be shown to catch a corrupted derivative; leave at 1.0.
inline double tanh_backward_fault_scale = 1.0;
}  // namespace testing

enum class Axis { rows, cols };

enum class OpKind : std::uint8_t {
  leaf,
  matmul,
  transpose,
  relu,
  tanh_op,
  sigmoid,
  add,
  sub,
  mul,
  scale,
  concat_cols,
  stack_rows,
  row,
  softmax_rows,  // masked: i0 = valid rows, i1 = valid cols
  softmax_cols,
  softmax_vec,  // masked: i0 = valid length
  weighted_sum,
  reduce_sum,
  bce_logits,
};

struct Node {
  OpKind kind = OpKind::leaf;
  NodeId a = -1;
  NodeId b = -1;
  std::int32_t args_off = 0;  // variadic inputs live in the tape's arg pool
  std::int32_t args_len = 0;
  std::int32_t i0 = 0;
  std::int32_t i1 = 0;
  double x0 = 0.0;
  std::int32_t param = -1;  // ParameterStore entry for parameter leaves
};

class Tape;

// Lightweight handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  NodeId id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t size() const { return value().size(); }
  double item() const {
    const Tensor& v = value();
    if (v.size() != 1) fail("Var::item: tensor ", v.shape_str(), " is not scalar");
    return v[0];
  }
};

class Tape {
 public:
  Var constant(Tensor t) {
    if (t.empty()) fail("Tape::constant: empty tensor");
    Node n;
    n.kind = OpKind::leaf;
    return push(n, std::move(t));
  }

  Var zeros(std::size_t n) { return constant(Tensor::vector(n)); }

  // Leaf bound to a store entry; backward() accumulates its adjoint into the
  // entry's gradient. All parameter leaves on one tape must share one store.
  Var param(ParameterStore& store, std::size_t index) {
    if (index >= store.size()) fail("Tape::param: index out of range");
    if (store_ == nullptr) store_ = &store;
    if (store_ != &store) fail("Tape::param: tape already bound to another store");
    Node n;
    n.kind = OpKind::leaf;
    n.param = static_cast<std::int32_t>(index);
    return push(n, store.value(index));
  }

  std::size_t node_count() const { return nodes_.size(); }

  const Tensor& value(NodeId id) const { return values_[static_cast<std::size_t>(id)]; }

  // Adjoint of a node after backward(); empty tensor if it never received one.
  const Tensor& adjoint(NodeId id) const { return adjoints_[static_cast<std::size_t>(id)]; }

  // Reverse sweep from a scalar output. Parameter gradients are accumulated
  // additively into `store` until the caller zeroes them.
  void backward(Var out, ParameterStore& store, double seed = 1.0) {
    if (out.tape != this) fail("backward: output from another tape");
    if (value(out.id).size() != 1)
      fail("backward: output must be scalar, got ", value(out.id).shape_str());
    if (store_ != nullptr && store_ != &store)
      fail("backward: store differs from the one bound at param()");

    adjoints_.assign(values_.size(), Tensor());
    grad_ref(out.id)[0] += seed;

    for (std::size_t i = nodes_.size(); i-- > 0;) {
      const Node& n = nodes_[i];
      if (n.kind == OpKind::leaf) continue;
      if (adjoints_[i].empty()) continue;  // not on any path to the output
      backprop_node(n, static_cast<NodeId>(i));
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      if (n.param < 0 || adjoints_[i].empty()) continue;
      Tensor& g = store.grad(static_cast<std::size_t>(n.param));
      const Tensor& a = adjoints_[i];
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += a[k];
    }
  }

  // Recompute every non-leaf value in place from the recorded operations.
  // With unchanged leaves this reproduces the cached outputs bit-identically.
  void replay() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].kind == OpKind::leaf) continue;
      values_[i] = eval_node(nodes_[i]);
    }
  }

  void reset() {
    nodes_.clear();
    values_.clear();
    adjoints_.clear();
    args_.clear();
    store_ = nullptr;
  }

  // --- used by the op constructors below ---

  Var emit(Node n) {
    Tensor v = eval_node(n);
    return push(n, std::move(v));
  }

  std::int32_t stash_args(std::span<const Var> vars) {
    const std::int32_t off = static_cast<std::int32_t>(args_.size());
    for (const Var& v : vars) args_.push_back(v.id);
    return off;
  }

 private:
  Var push(Node n, Tensor value) {
    nodes_.push_back(n);
    values_.push_back(std::move(value));
    return Var{this, static_cast<NodeId>(nodes_.size() - 1)};
  }

  Tensor& grad_ref(NodeId id) {
    Tensor& g = adjoints_[static_cast<std::size_t>(id)];
    if (g.empty()) g = values_[static_cast<std::size_t>(id)].zeros_like();
    return g;
  }

  const Tensor& in(const Node& n, int which) const {
    return values_[static_cast<std::size_t>(which == 0 ? n.a : n.b)];
  }

  Tensor eval_node(const Node& n) const;
  void backprop_node(const Node& n, NodeId out);

  std::vector<Node> nodes_;
  std::vector<Tensor> values_;
  std::vector<Tensor> adjoints_;
  std::vector<NodeId> args_;
  ParameterStore* store_ = nullptr;
};

inline const Tensor& Var::value() const {
  if (!valid()) fail("Var: unbound handle");
  return tape->value(id);
}

// ---------------------------------------------------------------------------
// forward kernels

namespace detail {

inline double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// softmax over a strided slice, written in place into `out` (same stride).
inline void softmax_slice(const double* x, double* out, std::size_t n,
                          std::size_t stride) {
  double max = x[0];
  for (std::size_t i = 1; i < n; ++i) max = std::max(max, x[i * stride]);
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::exp(x[i * stride] - max);
    out[i * stride] = e;
    denom += e;
  }
  for (std::size_t i = 0; i < n; ++i) out[i * stride] /= denom;
}

// d(softmax)/dx given output slice y and upstream slice g.
inline void softmax_slice_backward(const double* y, const double* g, double* gx,
                                   std::size_t n, std::size_t stride) {
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) dot += y[i * stride] * g[i * stride];
  for (std::size_t i = 0; i < n; ++i)
    gx[i * stride] += y[i * stride] * (g[i * stride] - dot);
}

}  // namespace detail

inline Tensor Tape::eval_node(const Node& n) const {
  switch (n.kind) {
    case OpKind::leaf:
      fail("eval_node: leaf has no op");
    case OpKind::matmul: {
      const Tensor& a = in(n, 0);
      const Tensor& b = in(n, 1);
      const std::size_t m = a.rows(), k = a.cols();
      if (b.is_matrix()) {
        const std::size_t c = b.cols();
        Tensor out = Tensor::matrix(m, c);
        for (std::size_t i = 0; i < m; ++i) {
          const double* arow = a.row_data(i);
          double* orow = out.row_data(i);
          for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b.row_data(p);
            for (std::size_t j = 0; j < c; ++j) orow[j] += av * brow[j];
          }
        }
        return out;
      }
      Tensor out = Tensor::vector(m);
      for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.row_data(i);
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * b[p];
        out[i] = acc;
      }
      return out;
    }
    case OpKind::transpose: {
      const Tensor& a = in(n, 0);
      Tensor out = Tensor::matrix(a.cols(), a.rows());
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
      return out;
    }
    case OpKind::relu: {
      Tensor out = in(n, 0);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
      return out;
    }
    case OpKind::tanh_op: {
      Tensor out = in(n, 0);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
      return out;
    }
    case OpKind::sigmoid: {
      Tensor out = in(n, 0);
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = detail::stable_sigmoid(out[i]);
      return out;
    }
    case OpKind::add: {
      Tensor out = in(n, 0);
      const Tensor& b = in(n, 1);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
      return out;
    }
    case OpKind::sub: {
      Tensor out = in(n, 0);
      const Tensor& b = in(n, 1);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
      return out;
    }
    case OpKind::mul: {
      Tensor out = in(n, 0);
      const Tensor& b = in(n, 1);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
      return out;
    }
    case OpKind::scale: {
      Tensor out = in(n, 0);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= n.x0;
      return out;
    }
    case OpKind::concat_cols: {
      const NodeId* ids = args_.data() + n.args_off;
      const std::size_t rows = values_[static_cast<std::size_t>(ids[0])].rows();
      std::size_t total = 0;
      for (std::int32_t k = 0; k < n.args_len; ++k)
        total += values_[static_cast<std::size_t>(ids[k])].cols();
      Tensor out = Tensor::matrix(rows, total);
      std::size_t off = 0;
      for (std::int32_t k = 0; k < n.args_len; ++k) {
        const Tensor& part = values_[static_cast<std::size_t>(ids[k])];
        for (std::size_t i = 0; i < rows; ++i) {
          const double* src = part.row_data(i);
          double* dst = out.row_data(i) + off;
          for (std::size_t j = 0; j < part.cols(); ++j) dst[j] = src[j];
        }
        off += part.cols();
      }
      return out;
    }
    case OpKind::stack_rows: {
      const NodeId* ids = args_.data() + n.args_off;
      const std::size_t cols = values_[static_cast<std::size_t>(ids[0])].size();
      Tensor out = Tensor::matrix(static_cast<std::size_t>(n.args_len), cols);
      for (std::int32_t t = 0; t < n.args_len; ++t) {
        const Tensor& v = values_[static_cast<std::size_t>(ids[t])];
        double* dst = out.row_data(static_cast<std::size_t>(t));
        for (std::size_t j = 0; j < cols; ++j) dst[j] = v[j];
      }
      return out;
    }
    case OpKind::row: {
      const Tensor& a = in(n, 0);
      Tensor out = Tensor::vector(a.cols());
      const double* src = a.row_data(static_cast<std::size_t>(n.i0));
      for (std::size_t j = 0; j < a.cols(); ++j) out[j] = src[j];
      return out;
    }
    case OpKind::softmax_rows: {
      const Tensor& a = in(n, 0);
      Tensor out = a.zeros_like();
      const std::size_t vr = static_cast<std::size_t>(n.i0);
      const std::size_t vc = static_cast<std::size_t>(n.i1);
      for (std::size_t i = 0; i < vr; ++i)
        detail::softmax_slice(a.row_data(i), out.row_data(i), vc, 1);
      return out;
    }
    case OpKind::softmax_cols: {
      const Tensor& a = in(n, 0);
      Tensor out = a.zeros_like();
      const std::size_t vr = static_cast<std::size_t>(n.i0);
      const std::size_t vc = static_cast<std::size_t>(n.i1);
      for (std::size_t j = 0; j < vc; ++j)
        detail::softmax_slice(a.data() + j, out.data() + j, vr, a.cols());
      return out;
    }
    case OpKind::softmax_vec: {
      const Tensor& a = in(n, 0);
      Tensor out = a.zeros_like();
      detail::softmax_slice(a.data(), out.data(), static_cast<std::size_t>(n.i0), 1);
      return out;
    }
    case OpKind::weighted_sum: {
      const Tensor& w = in(n, 0);
      const Tensor& rows = in(n, 1);
      Tensor out = Tensor::vector(rows.cols());
      for (std::size_t t = 0; t < w.size(); ++t) {
        const double wt = w[t];
        const double* src = rows.row_data(t);
        for (std::size_t j = 0; j < rows.cols(); ++j) out[j] += wt * src[j];
      }
      return out;
    }
    case OpKind::reduce_sum: {
      const Tensor& a = in(n, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
      return Tensor::scalar(acc);
    }
    case OpKind::bce_logits: {
      const double z = in(n, 0)[0];
      const double y = n.x0;
      const double loss = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
      return Tensor::scalar(loss);
    }
  }
  fail("eval_node: unknown op kind");
}

inline void Tape::backprop_node(const Node& n, NodeId out) {
  const Tensor& g = adjoints_[static_cast<std::size_t>(out)];
  switch (n.kind) {
    case OpKind::leaf:
      return;
    case OpKind::matmul: {
      const Tensor& a = in(n, 0);
      const Tensor& b = in(n, 1);
      Tensor& ga = grad_ref(n.a);
      Tensor& gb = grad_ref(n.b);
      const std::size_t m = a.rows(), k = a.cols();
      if (b.is_matrix()) {
        const std::size_t c = b.cols();
        // dA[i,p] += sum_j g[i,j] * B[p,j]   (two contiguous rows per dot)
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g.row_data(i);
          double* garow = ga.row_data(i);
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b.row_data(p);
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j) acc += grow[j] * brow[j];
            garow[p] += acc;
          }
        }
        // dB[p,j] += sum_i A[i,p] * g[i,j]   (axpy over contiguous rows)
        for (std::size_t i = 0; i < m; ++i) {
          const double* arow = a.row_data(i);
          const double* grow = g.row_data(i);
          for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* gbrow = gb.row_data(p);
            for (std::size_t j = 0; j < c; ++j) gbrow[j] += av * grow[j];
          }
        }
      } else {
        for (std::size_t i = 0; i < m; ++i) {
          const double gi = g[i];
          const double* arow = a.row_data(i);
          double* garow = ga.row_data(i);
          for (std::size_t p = 0; p < k; ++p) {
            garow[p] += gi * b[p];
            gb[p] += gi * arow[p];
          }
        }
      }
      return;
    }
    case OpKind::transpose: {
      Tensor& ga = grad_ref(n.a);
      for (std::size_t i = 0; i < ga.rows(); ++i)
        for (std::size_t j = 0; j < ga.cols(); ++j) ga.at(i, j) += g.at(j, i);
      return;
    }
    case OpKind::relu: {
      const Tensor& a = in(n, 0);
      Tensor& ga = grad_ref(n.a);
      for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] > 0.0) ga[i] += g[i];
      return;
    }
    case OpKind::tanh_op: {
      const Tensor& y = values_[static_cast<std::size_t>(out)];
      Tensor& ga = grad_ref(n.a);
      const double fault = testing::tanh_backward_fault_scale;
      for (std::size_t i = 0; i < y.size(); ++i)
        ga[i] += fault * (1.0 - y[i] * y[i]) * g[i];
      return;
    }
    case OpKind::sigmoid: {
      const Tensor& y = values_[static_cast<std::size_t>(out)];
      Tensor& ga = grad_ref(n.a);
      for (std::size_t i = 0; i < y.size(); ++i)
        ga[i] += y[i] * (1.0 - y[i]) * g[i];
      return;
    }
    case OpKind::add: {
      Tensor& ga = grad_ref(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      Tensor& gb = grad_ref(n.b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      return;
    }
    case OpKind::sub: {
      Tensor& ga = grad_ref(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      Tensor& gb = grad_ref(n.b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      return;
    }
    case OpKind::mul: {
      const Tensor& a = in(n, 0);
      const Tensor& b = in(n, 1);
      Tensor& ga = grad_ref(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += b[i] * g[i];
      Tensor& gb = grad_ref(n.b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += a[i] * g[i];
      return;
    }
    case OpKind::scale: {
      Tensor& ga = grad_ref(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.x0 * g[i];
      return;
    }
    case OpKind::concat_cols: {
      const NodeId* ids = args_.data() + n.args_off;
      std::size_t off = 0;
      for (std::int32_t k = 0; k < n.args_len; ++k) {
        Tensor& gp = grad_ref(ids[k]);
        for (std::size_t i = 0; i < gp.rows(); ++i) {
          const double* src = g.row_data(i) + off;
          double* dst = gp.row_data(i);
          for (std::size_t j = 0; j < gp.cols(); ++j) dst[j] += src[j];
        }
        off += gp.cols();
      }
      return;
    }
    case OpKind::stack_rows: {
      const NodeId* ids = args_.data() + n.args_off;
      for (std::int32_t t = 0; t < n.args_len; ++t) {
        Tensor& gv = grad_ref(ids[t]);
        const double* src = g.row_data(static_cast<std::size_t>(t));
        for (std::size_t j = 0; j < gv.size(); ++j) gv[j] += src[j];
      }
      return;
    }
    case OpKind::row: {
      Tensor& ga = grad_ref(n.a);
      double* dst = ga.row_data(static_cast<std::size_t>(n.i0));
      for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
      return;
    }
    case OpKind::softmax_rows: {
      const Tensor& y = values_[static_cast<std::size_t>(out)];
      Tensor& ga = grad_ref(n.a);
      const std::size_t vr = static_cast<std::size_t>(n.i0);
      const std::size_t vc = static_cast<std::size_t>(n.i1);
      for (std::size_t i = 0; i < vr; ++i)
        detail::softmax_slice_backward(y.row_data(i), g.row_data(i), ga.row_data(i),
                                       vc, 1);
      return;
    }
    case OpKind::softmax_cols: {
      const Tensor& y = values_[static_cast<std::size_t>(out)];
      Tensor& ga = grad_ref(n.a);
      const std::size_t vr = static_cast<std::size_t>(n.i0);
      const std::size_t vc = static_cast<std::size_t>(n.i1);
      for (std::size_t j = 0; j < vc; ++j)
        detail::softmax_slice_backward(y.data() + j, g.data() + j, ga.data() + j, vr,
                                       y.cols());
      return;
    }
    case OpKind::softmax_vec: {
      const Tensor& y = values_[static_cast<std::size_t>(out)];
      Tensor& ga = grad_ref(n.a);
      detail::softmax_slice_backward(y.data(), g.data(), ga.data(),
                                     static_cast<std::size_t>(n.i0), 1);
      return;
    }
    case OpKind::weighted_sum: {
      const Tensor& w = in(n, 0);
      const Tensor& rows = in(n, 1);
      Tensor& gw = grad_ref(n.a);
      Tensor& grows = grad_ref(n.b);
      for (std::size_t t = 0; t < w.size(); ++t) {
        const double* rrow = rows.row_data(t);
        double* grow = grows.row_data(t);
        double acc = 0.0;
        const double wt = w[t];
        for (std::size_t j = 0; j < rows.cols(); ++j) {
          acc += rrow[j] * g[j];
          grow[j] += wt * g[j];
        }
        gw[t] += acc;
      }
      return;
    }
    case OpKind::reduce_sum: {
      Tensor& ga = grad_ref(n.a);
      const double gs = g[0];
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gs;
      return;
    }
    case OpKind::bce_logits: {
      const double z = in(n, 0)[0];
      Tensor& ga = grad_ref(n.a);
      ga[0] += (detail::stable_sigmoid(z) - n.x0) * g[0];
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// op constructors (validation lives here; kernels assume valid nodes)

namespace detail {
inline void check_same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) fail(op, ": operands from different tapes");
}
}  // namespace detail

// Matrix product: (m x k)·(k x n) -> m x n, or (m x k)·vector(k) -> vector(m).
inline Var matmul(Var a, Var b) {
  detail::check_same_tape(a, b, "matmul");
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (!ta.is_matrix())
    fail("matmul: left operand must be a matrix, got ", ta.shape_str());
  if (ta.cols() != tb.rows())
    fail("matmul: inner extents differ, ", ta.shape_str(), " vs ", tb.shape_str());
  Node n;
  n.kind = OpKind::matmul;
  n.a = a.id;
  n.b = b.id;
  return a.tape->emit(n);
}

inline Var transpose(Var a) {
  if (!a.value().is_matrix())
    fail("transpose: expected matrix, got ", a.value().shape_str());
  Node n;
  n.kind = OpKind::transpose;
  n.a = a.id;
  return a.tape->emit(n);
}

inline Var relu(Var a) {
  Node n;
  n.kind = OpKind::relu;
  n.a = a.id;
  return a.tape->emit(n);
}

inline Var tanh(Var a) {
  Node n;
  n.kind = OpKind::tanh_op;
  n.a = a.id;
  return a.tape->emit(n);
}

inline Var sigmoid(Var a) {
  Node n;
  n.kind = OpKind::sigmoid;
  n.a = a.id;
  return a.tape->emit(n);
}

namespace detail {
inline Var elementwise(OpKind kind, Var a, Var b, const char* name) {
  check_same_tape(a, b, name);
  if (!a.value().same_shape(b.value()))
    fail(name, ": shape mismatch, ", a.value().shape_str(), " vs ",
         b.value().shape_str());
  Node n;
  n.kind = kind;
  n.a = a.id;
  n.b = b.id;
  return a.tape->emit(n);
}
}  // namespace detail

inline Var add(Var a, Var b) { return detail::elementwise(OpKind::add, a, b, "add"); }
inline Var sub(Var a, Var b) { return detail::elementwise(OpKind::sub, a, b, "sub"); }
inline Var mul(Var a, Var b) { return detail::elementwise(OpKind::mul, a, b, "mul"); }

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

inline Var scale(Var a, double c) {
  Node n;
  n.kind = OpKind::scale;
  n.a = a.id;
  n.x0 = c;
  return a.tape->emit(n);
}

// Lay matrices with equal row counts side by side, in argument order.
inline Var concat_features(std::span<const Var> parts) {
  if (parts.empty()) fail("concat_features: no operands");
  Tape* tape = parts[0].tape;
  const std::size_t rows = parts[0].value().rows();
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (parts[k].tape != tape) fail("concat_features: operands from different tapes");
    const Tensor& t = parts[k].value();
    if (!t.is_matrix())
      fail("concat_features: operand ", k, " is not a matrix, got ", t.shape_str());
    if (t.rows() != rows)
      fail("concat_features: operand ", k, " has ", t.rows(), " rows, expected ",
           rows);
  }
  Node n;
  n.kind = OpKind::concat_cols;
  n.args_off = tape->stash_args(parts);
  n.args_len = static_cast<std::int32_t>(parts.size());
  return tape->emit(n);
}

inline Var concat_features(std::initializer_list<Var> parts) {
  return concat_features(std::span<const Var>(parts.begin(), parts.size()));
}

// Stack equal-length vectors as the rows of a matrix.
inline Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) fail("stack_rows: no operands");
  Tape* tape = rows[0].tape;
  const std::size_t cols = rows[0].value().size();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].tape != tape) fail("stack_rows: operands from different tapes");
    const Tensor& t = rows[k].value();
    if (!t.is_vector() || t.size() != cols)
      fail("stack_rows: operand ", k, " has shape ", t.shape_str(), ", expected [",
           cols, "]");
  }
  Node n;
  n.kind = OpKind::stack_rows;
  n.args_off = tape->stash_args(rows);
  n.args_len = static_cast<std::int32_t>(rows.size());
  return tape->emit(n);
}

inline Var stack_rows(std::initializer_list<Var> rows) {
  return stack_rows(std::span<const Var>(rows.begin(), rows.size()));
}

inline Var row(Var m, std::size_t index) {
  const Tensor& t = m.value();
  if (!t.is_matrix()) fail("row: expected matrix, got ", t.shape_str());
  if (index >= t.rows()) fail("row: index ", index, " out of ", t.rows());
  Node n;
  n.kind = OpKind::row;
  n.a = m.id;
  n.i0 = static_cast<std::int32_t>(index);
  return m.tape->emit(n);
}

// Softmax restricted to the leading valid_rows x valid_cols block; each valid
// slice along the chosen axis becomes a simplex vector, everything else is
// exactly zero. Rejects empty valid regions (a slice with no key positions).
inline Var masked_softmax(Var m, Axis axis, std::size_t valid_rows,
                          std::size_t valid_cols) {
  const Tensor& t = m.value();
  if (!t.is_matrix()) fail("masked_softmax: expected matrix, got ", t.shape_str());
  if (valid_rows == 0 || valid_rows > t.rows() || valid_cols == 0 ||
      valid_cols > t.cols())
    fail("masked_softmax: invalid region ", valid_rows, "x", valid_cols, " for ",
         t.shape_str());
  Node n;
  n.kind = axis == Axis::rows ? OpKind::softmax_rows : OpKind::softmax_cols;
  n.a = m.id;
  n.i0 = static_cast<std::int32_t>(valid_rows);
  n.i1 = static_cast<std::int32_t>(valid_cols);
  return m.tape->emit(n);
}

// Softmax of every slice along the chosen axis (no masking).
inline Var softmax_axis(Var m, Axis axis) {
  const Tensor& t = m.value();
  if (!t.is_matrix()) fail("softmax_axis: expected matrix, got ", t.shape_str());
  return masked_softmax(m, axis, t.rows(), t.cols());
}

// Vector softmax over the first valid_len entries; the rest are exactly zero.
inline Var masked_softmax(Var v, std::size_t valid_len) {
  const Tensor& t = v.value();
  if (!t.is_vector()) fail("masked_softmax: expected vector, got ", t.shape_str());
  if (valid_len == 0 || valid_len > t.size())
    fail("masked_softmax: valid length ", valid_len, " out of range for ",
         t.shape_str());
  Node n;
  n.kind = OpKind::softmax_vec;
  n.a = v.id;
  n.i0 = static_cast<std::int32_t>(valid_len);
  return v.tape->emit(n);
}

// Convex combination of the rows of a T x d matrix by a simplex weight vector.
inline Var weighted_sum(Var weights, Var rows) {
  detail::check_same_tape(weights, rows, "weighted_sum");
  const Tensor& w = weights.value();
  const Tensor& r = rows.value();
  if (!w.is_vector()) fail("weighted_sum: weights must be a vector, got ", w.shape_str());
  if (!r.is_matrix()) fail("weighted_sum: rows must be a matrix, got ", r.shape_str());
  if (w.size() != r.rows())
    fail("weighted_sum: ", w.size(), " weights vs ", r.rows(), " rows");
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] < 0.0) fail("weighted_sum: negative weight at ", i);
    total += w[i];
  }
  if (std::abs(total - 1.0) > 1e-9)
    fail("weighted_sum: weights sum to ", total, ", expected 1");
  Node n;
  n.kind = OpKind::weighted_sum;
  n.a = weights.id;
  n.b = rows.id;
  return weights.tape->emit(n);
}

inline Var sum(Var a) {
  Node n;
  n.kind = OpKind::reduce_sum;
  n.a = a.id;
  return a.tape->emit(n);
}

// Binary cross-entropy between sigmoid(logit) and a 0/1 label, evaluated in
// the numerically stable logit form.
inline Var bce_with_logits(Var logit, double label) {
  if (logit.value().size() != 1)
    fail("bce_with_logits: logit must be scalar, got ", logit.value().shape_str());
  if (label != 0.0 && label != 1.0) fail("bce_with_logits: label must be 0 or 1");
  Node n;
  n.kind = OpKind::bce_logits;
  n.a = logit.id;
  n.x0 = label;
  return logit.tape->emit(n);
}

}  // namespace mcqa
