// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// A Tape records primitive operations in creation order, which is always a
// topological order. Var is a lightweight handle (tape pointer + node id);
// expressions are built with free functions and a few operators:
//
//   ad::Tape tape;
//   auto W = tape.input(weights);
//   auto x = tape.input(features);
//   auto y = ad::sum(ad::tanh(ad::matmul(W, x)));
//   auto grads = tape.backward(y);
//   grads[x];  // dy/dx
//
// Every primitive checks its operand shapes and rejects non-finite results,
// naming itself in the diagnostic.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "maea/error.hpp"
#include "maea/tensor.hpp"

namespace maea::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = std::numeric_limits<std::size_t>::max();

  bool valid() const { return tape != nullptr; }
  const Tensor& value() const;
};

enum class Op {
  Leaf,
  Add,
  AddRow,
  Mul,
  Scale,
  MatMul,
  Transpose,
  Tanh,
  Relu,
  Softmax,
  Embedding,
  Concat,
  Slice,
  Mean,
  MeanRows,
  Sum,
  Pick,
  Reshape,
  CrossEntropy,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::AddRow: return "add_row";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::Softmax: return "softmax";
    case Op::Embedding: return "embedding";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Mean: return "mean";
    case Op::MeanRows: return "mean_rows";
    case Op::Sum: return "sum";
    case Op::Pick: return "pick";
    case Op::Reshape: return "reshape";
    case Op::CrossEntropy: return "cross_entropy";
  }
  return "?";
}

/// Gradients of one objective with respect to every node of a tape. Nodes
/// that do not influence the objective hold zeros of their own shape.
class GradientMap {
 public:
  explicit GradientMap(std::vector<Tensor> grads) : grads_(std::move(grads)) {}

  const Tensor& operator[](Var v) const { return grads_.at(v.id); }
  std::size_t size() const { return grads_.size(); }

 private:
  std::vector<Tensor> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  /// Records a leaf (input, parameter or constant). Every leaf receives a
  /// gradient; the caller decides which ones it watches.
  Var input(Tensor value) {
    check_finite(value, Op::Leaf);
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    return push(std::move(n));
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  std::size_t size() const { return nodes_.size(); }
  Op op(Var v) const { return nodes_.at(v.id).op; }

  /// Inputs of a node, in the order they were passed to the primitive.
  std::vector<Var> inputs(Var v) const {
    std::vector<Var> out;
    for (std::size_t id : nodes_.at(v.id).inputs) out.push_back(Var{const_cast<Tape*>(this), id});
    return out;
  }

  GradientMap backward(Var objective) const;

 private:
  struct Node {
    Op op = Op::Leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    std::vector<std::size_t> indices;  // embedding ids, slice bounds, pick index, target
    std::vector<double> mask;          // softmax mask (1 = keep)
    double factor = 0.0;               // scale
  };

  static void check_finite(const Tensor& t, Op op) {
    if (!t.all_finite()) {
      throw Error(std::string("non-finite value produced by ") + op_name(op));
    }
  }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  Var record(Op op, std::initializer_list<Var> in, Tensor value, std::vector<std::size_t> indices = {},
             std::vector<double> mask = {}, double factor = 0.0) {
    check_finite(value, op);
    Node n;
    n.op = op;
    for (const Var& v : in) n.inputs.push_back(v.id);
    n.value = std::move(value);
    n.indices = std::move(indices);
    n.mask = std::move(mask);
    n.factor = factor;
    return push(std::move(n));
  }

  Var record_many(Op op, const std::vector<Var>& in, Tensor value, std::vector<std::size_t> indices = {}) {
    check_finite(value, op);
    Node n;
    n.op = op;
    for (const Var& v : in) n.inputs.push_back(v.id);
    n.value = std::move(value);
    n.indices = std::move(indices);
    return push(std::move(n));
  }

  std::vector<Node> nodes_;

  friend Var operator+(Var, Var);
  friend Var operator*(Var, Var);
  friend Var scale(Var, double);
  friend Var matmul(Var, Var);
  friend Var transpose(Var);
  friend Var tanh(Var);
  friend Var relu(Var);
  friend Var softmax(Var, const std::vector<double>&);
  friend Var embedding(Var, const std::vector<std::size_t>&);
  friend Var concat(const std::vector<Var>&);
  friend Var slice(Var, std::size_t, std::size_t);
  friend Var mean(Var);
  friend Var mean_rows(Var);
  friend Var sum(Var);
  friend Var pick(Var, std::size_t);
  friend Var reshape(Var, std::vector<std::size_t>);
  friend Var cross_entropy(Var, std::size_t);
};

inline const Tensor& Var::value() const { return tape->value(*this); }

namespace detail {

inline Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || a.tape != b.tape) {
    throw Error(std::string(op) + ": operands belong to different tapes");
  }
  return *a.tape;
}

[[noreturn]] inline void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw Error(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

}  // namespace detail

/// Elementwise sum of equal shapes, or a rank-2 matrix plus a row vector
/// broadcast over its rows.
inline Var operator+(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "add");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.same_shape(y)) {
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
    return t.record(Op::Add, {a, b}, std::move(out));
  }
  if (x.rank() == 2 && y.rank() == 1 && y.size() == x.cols()) {
    Tensor out = x;
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) += y[c];
    return t.record(Op::AddRow, {a, b}, std::move(out));
  }
  detail::shape_error("add", x, y);
}

/// Elementwise (Hadamard) product.
inline Var operator*(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "mul");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (!x.same_shape(y)) detail::shape_error("mul", x, y);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return t.record(Op::Mul, {a, b}, std::move(out));
}

inline Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return a.tape->record(Op::Scale, {a}, std::move(out), {}, {}, factor);
}

/// (m×k)·(k×n) → m×n, or (m×k)·(k) → m.
inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "matmul");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rank() != 2 || (y.rank() != 1 && y.rank() != 2) || x.cols() != y.dims()[0]) {
    detail::shape_error("matmul", x, y);
  }
  const std::size_t m = x.rows();
  const std::size_t k = x.cols();
  const std::size_t n = y.rank() == 2 ? y.cols() : 1;
  Tensor out = y.rank() == 2 ? Tensor({m, n}) : Tensor({m});
  const double* xd = x.data().data();
  const double* yd = y.data().data();
  double* od = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = xd[i * k + p];
      if (xv == 0.0) continue;
      const double* yrow = yd + p * n;
      double* orow = od + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += xv * yrow[j];
    }
  }
  return t.record(Op::MatMul, {a, b}, std::move(out));
}

inline Var transpose(Var a) {
  const Tensor& x = a.value();
  if (x.rank() != 2) throw Error("transpose: expected rank 2, got " + x.shape_string());
  Tensor out({x.cols(), x.rows()});
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(c, r) = x(r, c);
  return a.tape->record(Op::Transpose, {a}, std::move(out));
}

inline Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::tanh(v);
  return a.tape->record(Op::Tanh, {a}, std::move(out));
}

inline Var relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return a.tape->record(Op::Relu, {a}, std::move(out));
}

/// Softmax over the last dimension (each row of a matrix). Entries whose mask
/// value is 0 get probability 0; a row with every entry masked is rejected.
/// The mask, when given, is indexed by column and shared by all rows.
inline Var softmax(Var a, const std::vector<double>& mask = {}) {
  const Tensor& x = a.value();
  const std::size_t cols = x.cols();
  if (!mask.empty() && mask.size() != cols) {
    throw Error("softmax: mask length " + std::to_string(mask.size()) + " does not match " + x.shape_string());
  }
  Tensor out(x.dims());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (mask.empty() || mask[c] != 0.0) hi = std::max(hi, x[r * cols + c]);
    if (!std::isfinite(hi)) throw Error("softmax: every position is masked");
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double e = (mask.empty() || mask[c] != 0.0) ? std::exp(x[r * cols + c] - hi) : 0.0;
      out[r * cols + c] = e;
      z += e;
    }
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= z;
  }
  return a.tape->record(Op::Softmax, {a}, std::move(out), {}, mask);
}

/// Rows of `table` (vocab × width) selected by `ids`, as an ids.size() × width matrix.
inline Var embedding(Var table, const std::vector<std::size_t>& ids) {
  const Tensor& w = table.value();
  if (w.rank() != 2) throw Error("embedding: table must be rank 2, got " + w.shape_string());
  if (ids.empty()) throw Error("embedding: empty id list");
  Tensor out({ids.size(), w.cols()});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= w.rows()) {
      throw Error("embedding: id " + std::to_string(ids[r]) + " out of range for " + w.shape_string());
    }
    for (std::size_t c = 0; c < w.cols(); ++c) out(r, c) = w(ids[r], c);
  }
  return table.tape->record(Op::Embedding, {table}, std::move(out), ids);
}

/// Concatenates vectors end to end, or matrices with equal column counts
/// along their rows.
inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("concat: no operands");
  Tape& t = *parts.front().tape;
  const bool matrices = parts.front().value().rank() == 2;
  const std::size_t cols = parts.front().value().cols();
  std::vector<double> data;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    detail::same_tape(parts.front(), p, "concat");
    const Tensor& v = p.value();
    if (matrices ? (v.rank() != 2 || v.cols() != cols) : v.rank() != 1) {
      detail::shape_error("concat", parts.front().value(), v);
    }
    rows += v.rows();
    data.insert(data.end(), v.data().begin(), v.data().end());
  }
  Tensor out = matrices ? Tensor({rows, cols}, std::move(data)) : Tensor::vector(std::move(data));
  return t.record_many(Op::Concat, parts, std::move(out));
}

/// Elements [offset, offset+count) of a vector, or rows of a matrix.
inline Var slice(Var a, std::size_t offset, std::size_t count) {
  const Tensor& x = a.value();
  const std::size_t extent = x.rank() == 2 ? x.rows() : x.size();
  if (count == 0 || offset + count > extent) {
    throw Error("slice: range [" + std::to_string(offset) + ", " + std::to_string(offset + count) +
                ") out of bounds for " + x.shape_string());
  }
  const std::size_t stride = x.rank() == 2 ? x.cols() : 1;
  std::vector<double> data(x.data().begin() + static_cast<std::ptrdiff_t>(offset * stride),
                           x.data().begin() + static_cast<std::ptrdiff_t>((offset + count) * stride));
  Tensor out = x.rank() == 2 ? Tensor({count, x.cols()}, std::move(data)) : Tensor::vector(std::move(data));
  return a.tape->record(Op::Slice, {a}, std::move(out), {offset, count});
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->record(Op::Sum, {a}, Tensor::scalar(s));
}

inline Var mean(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->record(Op::Mean, {a}, Tensor::scalar(s / static_cast<double>(a.value().size())));
}

/// Column means of a matrix (mean over its rows).
inline Var mean_rows(Var a) {
  const Tensor& x = a.value();
  if (x.rank() != 2) throw Error("mean_rows: expected rank 2, got " + x.shape_string());
  Tensor out({x.cols()});
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out[c] += x(r, c);
  for (double& v : out.data()) v /= static_cast<double>(x.rows());
  return a.tape->record(Op::MeanRows, {a}, std::move(out));
}

/// One element (flat index) as a scalar.
inline Var pick(Var a, std::size_t index) {
  const Tensor& x = a.value();
  if (index >= x.size()) {
    throw Error("pick: index " + std::to_string(index) + " out of range for " + x.shape_string());
  }
  return a.tape->record(Op::Pick, {a}, Tensor::scalar(x[index]), {index});
}

inline Var reshape(Var a, std::vector<std::size_t> dims) {
  return a.tape->record(Op::Reshape, {a}, a.value().reshaped(std::move(dims)));
}

/// −log softmax(logits)[target] for a logit vector.
inline Var cross_entropy(Var logits, std::size_t target) {
  const Tensor& x = logits.value();
  if (x.rank() != 1 || target >= x.size()) {
    throw Error("cross_entropy: bad target " + std::to_string(target) + " for " + x.shape_string());
  }
  const double hi = *std::max_element(x.data().begin(), x.data().end());
  double z = 0.0;
  for (double v : x.data()) z += std::exp(v - hi);
  const double loss = std::log(z) + hi - x[target];
  return logits.tape->record(Op::CrossEntropy, {logits}, Tensor::scalar(loss), {target});
}

inline GradientMap Tape::backward(Var objective) const {
  if (objective.tape != this) throw Error("backward: objective belongs to another tape");
  const Node& obj = nodes_.at(objective.id);
  if (obj.value.size() != 1) throw Error("backward: objective is not scalar, shape " + obj.value.shape_string());

  std::vector<Tensor> g(nodes_.size());
  g[objective.id] = Tensor(obj.value.dims(), 1.0);

  auto grad_of = [&](std::size_t id) -> Tensor& {
    if (g[id].empty()) g[id] = Tensor(nodes_[id].value.dims());
    return g[id];
  };

  for (std::size_t i = objective.id + 1; i-- > 0;) {
    if (g[i].empty()) continue;
    const Node& n = nodes_[i];
    const Tensor& go = g[i];
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add: {
        for (std::size_t in : n.inputs) {
          Tensor& gi = grad_of(in);
          for (std::size_t k = 0; k < go.size(); ++k) gi[k] += go[k];
        }
        break;
      }
      case Op::AddRow: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t k = 0; k < go.size(); ++k) ga[k] += go[k];
        Tensor& gb = grad_of(n.inputs[1]);
        const std::size_t cols = go.cols();
        for (std::size_t k = 0; k < go.size(); ++k) gb[k % cols] += go[k];
        break;
      }
      case Op::Mul: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t k = 0; k < go.size(); ++k) ga[k] += go[k] * b[k];
        Tensor& gb = grad_of(n.inputs[1]);
        for (std::size_t k = 0; k < go.size(); ++k) gb[k] += go[k] * a[k];
        break;
      }
      case Op::Scale: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t k = 0; k < go.size(); ++k) ga[k] += go[k] * n.factor;
        break;
      }
      case Op::MatMul: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        const std::size_t m = a.rows();
        const std::size_t kk = a.cols();
        const std::size_t nn = b.rank() == 2 ? b.cols() : 1;
        Tensor& ga = grad_of(n.inputs[0]);
        Tensor& gb = grad_of(n.inputs[1]);
        // dA = dOut · Bᵀ ; dB = Aᵀ · dOut
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t p = 0; p < kk; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < nn; ++j) acc += go[r * nn + j] * b[p * nn + j];
            ga[r * kk + p] += acc;
          }
        }
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t p = 0; p < kk; ++p) {
            const double av = a[r * kk + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < nn; ++j) gb[p * nn + j] += av * go[r * nn + j];
          }
        }
        break;
      }
      case Op::Transpose: {
        Tensor& ga = grad_of(n.inputs[0]);
        const std::size_t rows = go.rows();
        const std::size_t cols = go.cols();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) ga[c * rows + r] += go[r * cols + c];
        break;
      }
      case Op::Tanh: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t k = 0; k < go.size(); ++k) ga[k] += go[k] * (1.0 - n.value[k] * n.value[k]);
        break;
      }
      case Op::Relu: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t k = 0; k < go.size(); ++k) ga[k] += n.value[k] > 0.0 ? go[k] : 0.0;
        break;
      }
      case Op::Softmax: {
        // Jacobian-vector product on the saved output: dx = y ⊙ (g − ⟨g, y⟩).
        Tensor& ga = grad_of(n.inputs[0]);
        const std::size_t cols = n.value.cols();
        for (std::size_t r = 0; r < n.value.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += go[r * cols + c] * n.value[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c)
            ga[r * cols + c] += n.value[r * cols + c] * (go[r * cols + c] - dot);
        }
        break;
      }
      case Op::Embedding: {
        Tensor& gt = grad_of(n.inputs[0]);
        const std::size_t cols = go.cols();
        for (std::size_t r = 0; r < n.indices.size(); ++r)
          for (std::size_t c = 0; c < cols; ++c) gt[n.indices[r] * cols + c] += go[r * cols + c];
        break;
      }
      case Op::Concat: {
        std::size_t offset = 0;
        for (std::size_t in : n.inputs) {
          Tensor& gi = grad_of(in);
          for (std::size_t k = 0; k < gi.size(); ++k) gi[k] += go[offset + k];
          offset += gi.size();
        }
        break;
      }
      case Op::Slice: {
        Tensor& ga = grad_of(n.inputs[0]);
        const std::size_t stride = ga.rank() == 2 ? ga.cols() : 1;
        const std::size_t start = n.indices[0] * stride;
        for (std::size_t k = 0; k < go.size(); ++k) ga[start + k] += go[k];
        break;
      }
      case Op::Sum: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (double& v : ga.data()) v += go[0];
        break;
      }
      case Op::Mean: {
        Tensor& ga = grad_of(n.inputs[0]);
        const double share = go[0] / static_cast<double>(ga.size());
        for (double& v : ga.data()) v += share;
        break;
      }
      case Op::MeanRows: {
        Tensor& ga = grad_of(n.inputs[0]);
        const std::size_t rows = ga.rows();
        const std::size_t cols = ga.cols();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += go[c] / static_cast<double>(rows);
        break;
      }
      case Op::Pick: {
        grad_of(n.inputs[0])[n.indices[0]] += go[0];
        break;
      }
      case Op::Reshape: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t k = 0; k < go.size(); ++k) ga[k] += go[k];
        break;
      }
      case Op::CrossEntropy: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        Tensor& ga = grad_of(n.inputs[0]);
        const double hi = *std::max_element(x.data().begin(), x.data().end());
        double z = 0.0;
        for (double v : x.data()) z += std::exp(v - hi);
        for (std::size_t k = 0; k < x.size(); ++k) {
          const double p = std::exp(x[k] - hi) / z;
          ga[k] += go[0] * (p - (k == n.indices[0] ? 1.0 : 0.0));
        }
        break;
      }
    }
  }

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (g[i].empty()) g[i] = Tensor(nodes_[i].value.dims());
  }
  return GradientMap(std::move(g));
}

/// Compares the reverse-mode gradient of a scalar function against central
/// finite differences. `build` receives a fresh tape and the leaf holding the
/// evaluation point, and returns the scalar objective node. Returns
/// max_i |g_ad − g_fd| / max(|g_ad|, |g_fd|, 1e-8).
inline double finite_diff_check(const std::function<Var(Tape&, Var)>& build, const Tensor& point,
                                double step) {
  Tensor ad_grad;
  {
    Tape tape;
    Var x = tape.input(point);
    Var y = build(tape, x);
    ad_grad = tape.backward(y)[x];
  }
  auto eval = [&](const Tensor& p) {
    Tape tape;
    Var x = tape.input(p);
    const double v = build(tape, x).value()[0];
    if (!std::isfinite(v)) throw Error("finite_diff_check: non-finite function value");
    return v;
  };
  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double up = eval(probe);
    probe[i] = point[i] - step;
    const double down = eval(probe);
    probe[i] = point[i];
    const double fd = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(ad_grad[i]), std::abs(fd), 1e-8});
    worst = std::max(worst, std::abs(ad_grad[i] - fd) / denom);
  }
  return worst;
}

}  // namespace maea::ad
