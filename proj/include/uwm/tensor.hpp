// Copyright 2026 The uwm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records a topologically ordered list of nodes. Building an
// expression only records shapes; Tape::evaluate() runs the forward pass up
// to a root and Tape::backward() propagates adjoints from it. Batches are
// matrix rows throughout.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "uwm/errors.hpp"

namespace uwm {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline std::string shape_str(Index rows, Index cols) {
  std::ostringstream os;
  os << '[' << rows << 'x' << cols << ']';
  return os.str();
}

inline std::string shape_str(const Matrix& m) { return shape_str(m.rows(), m.cols()); }

// A named trainable matrix with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Owns parameters with stable addresses, in insertion order.
class ParameterSet {
 public:
  Parameter& add(std::string name, Matrix init) {
    if (find(name) != nullptr) throw ContractError("duplicate parameter '" + name + "'");
    auto p = std::make_unique<Parameter>();
    p->name = std::move(name);
    p->grad = Matrix::Zero(init.rows(), init.cols());
    p->value = std::move(init);
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter* find(std::string_view name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }
  const Parameter* find(std::string_view name) const {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  Parameter& at(std::string_view name) {
    Parameter* p = find(name);
    if (p == nullptr) throw ContractError("unknown parameter '" + std::string(name) + "'");
    return *p;
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.setZero();
  }

  std::size_t size() const { return params_.size(); }

  // Total number of scalar entries.
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

enum class OpTag : std::uint8_t {
  kLeaf,
  kConstant,
  kParam,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kAddRow,
  kMulCol,
  kScale,
  kAddScalar,
  kTanh,
  kSigmoid,
  kSoftplus,
  kSoftmax,
  kConcat,
  kSlice,
  kSum,
  kMean,
  kRowSum,
  kCosineRows,
  kSquaredError,
  kSoftmaxCrossEntropy,
  kGuard,
};

inline std::string_view op_name(OpTag tag) {
  switch (tag) {
    case OpTag::kLeaf: return "leaf";
    case OpTag::kConstant: return "constant";
    case OpTag::kParam: return "param";
    case OpTag::kMatMul: return "matmul";
    case OpTag::kAdd: return "add";
    case OpTag::kSub: return "sub";
    case OpTag::kMul: return "mul";
    case OpTag::kAddRow: return "add_row";
    case OpTag::kMulCol: return "mul_col";
    case OpTag::kScale: return "scale";
    case OpTag::kAddScalar: return "add_scalar";
    case OpTag::kTanh: return "tanh";
    case OpTag::kSigmoid: return "sigmoid";
    case OpTag::kSoftplus: return "softplus";
    case OpTag::kSoftmax: return "softmax";
    case OpTag::kConcat: return "concat";
    case OpTag::kSlice: return "slice";
    case OpTag::kSum: return "sum";
    case OpTag::kMean: return "mean";
    case OpTag::kRowSum: return "row_sum";
    case OpTag::kCosineRows: return "cosine_rows";
    case OpTag::kSquaredError: return "squared_error";
    case OpTag::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpTag::kGuard: return "guard";
  }
  return "?";
}

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the Tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

  Index rows() const;
  Index cols() const;
  OpTag op() const;
  bool evaluated() const;
  const Matrix& value() const;
  // Zero matrix until a backward pass reached this node.
  Matrix adjoint() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  struct Node;
  using Forward = std::function<void(Tape&, Node&)>;
  using Backward = std::function<void(Tape&, const Node&)>;

  struct Node {
    OpTag op = OpTag::kLeaf;
    Index rows = 0;
    Index cols = 0;
    std::vector<std::size_t> parents;
    bool requires_grad = false;
    bool evaluated = false;
    Matrix value;
    Matrix adjoint;  // empty until touched by backward
    Parameter* param = nullptr;
    Forward forward;
    Backward backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  // Differentiable input.
  Var leaf(Matrix data) { return source(OpTag::kLeaf, std::move(data), true); }

  // Input that never receives an adjoint.
  Var constant(Matrix data) { return source(OpTag::kConstant, std::move(data), false); }

  // Trainable parameter; one node per parameter per tape.
  Var param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var(this, it->second);
    Var v = source(OpTag::kParam, p.value, true);
    nodes_[v.id_].param = &p;
    param_nodes_.emplace(&p, v.id_);
    return v;
  }

  // Records an operation. Used by the primitive builders below.
  Var record(OpTag op, Index rows, Index cols, std::vector<std::size_t> parents, Forward fwd,
             Backward bwd) {
    if (backward_done_) throw StateError("tape: cannot extend a tape after backward");
    Node n;
    n.op = op;
    n.rows = rows;
    n.cols = cols;
    for (std::size_t p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
    n.parents = std::move(parents);
    n.forward = std::move(fwd);
    n.backward = std::move(bwd);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  // Runs the forward pass for every pending node up to and including root.
  const Matrix& evaluate(Var root) {
    check_owned(root, "evaluate");
    for (std::size_t i = first_pending_; i <= root.id_; ++i) {
      Node& n = nodes_[i];
      if (n.evaluated) continue;
      n.forward(*this, n);
      n.evaluated = true;
    }
    first_pending_ = std::max(first_pending_, root.id_ + 1);
    return nodes_[root.id_].value;
  }

  // Propagates d(root)/d(node) into every node's adjoint. Root must be 1x1.
  void backward(Var root) {
    check_owned(root, "backward");
    const Node& r = nodes_[root.id_];
    if (r.rows != 1 || r.cols != 1)
      throw ContractError("backward: non-scalar root " + shape_str(r.rows, r.cols) +
                          " requires a seed adjoint");
    backward(root, Matrix::Ones(1, 1));
  }

  void backward(Var root, const Matrix& seed) {
    check_owned(root, "backward");
    Node& r = nodes_[root.id_];
    if (!r.evaluated) throw StateError("backward: forward pass has not been run on the root");
    if (backward_done_)
      throw StateError("backward: tape already differentiated; call zero_adjoints() first");
    if (seed.rows() != r.rows || seed.cols() != r.cols)
      throw DimensionError("backward: seed " + shape_str(seed) + " vs root " +
                           shape_str(r.rows, r.cols));
    backward_done_ = true;
    r.adjoint = seed;
    for (std::size_t i = root.id_ + 1; i-- > 0;) {
      const Node& n = nodes_[i];
      if (n.adjoint.size() == 0 || !n.requires_grad || !n.backward) continue;
      n.backward(*this, n);
    }
  }

  // Clears adjoints so another backward pass may run over the same forward.
  void zero_adjoints() {
    for (Node& n : nodes_) n.adjoint.resize(0, 0);
    backward_done_ = false;
  }

  // Adds each parameter node's adjoint into Parameter::grad.
  void accumulate_param_grads() const {
    for (const auto& [param, id] : param_nodes_) {
      const Node& n = nodes_[id];
      if (n.adjoint.size() != 0) param->grad += n.adjoint;
    }
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  Node& node(std::size_t id) { return nodes_[id]; }

  const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }

  // Adjoint buffer of a parent, allocated to zeros on first use.
  Matrix& adjoint_of(std::size_t id) {
    Node& n = nodes_[id];
    if (n.adjoint.size() == 0) n.adjoint = Matrix::Zero(n.rows, n.cols);
    return n.adjoint;
  }
  bool wants_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  Var source(OpTag op, Matrix data, bool requires_grad) {
    if (backward_done_) throw StateError("tape: cannot extend a tape after backward");
    Node n;
    n.op = op;
    n.rows = data.rows();
    n.cols = data.cols();
    n.requires_grad = requires_grad;
    n.evaluated = true;
    n.value = std::move(data);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  void check_owned(Var v, const char* what) const {
    if (v.tape_ != this) throw ContractError(std::string(what) + ": value belongs to another tape");
  }

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::size_t> param_nodes_;
  std::size_t first_pending_ = 0;
  bool backward_done_ = false;
};

inline Index Var::rows() const { return tape_->node(id_).rows; }
inline Index Var::cols() const { return tape_->node(id_).cols; }
inline OpTag Var::op() const { return tape_->node(id_).op; }
inline bool Var::evaluated() const { return tape_->node(id_).evaluated; }

inline const Matrix& Var::value() const {
  const auto& n = tape_->node(id_);
  if (!n.evaluated)
    throw StateError("value of '" + std::string(op_name(n.op)) + "' node read before evaluate");
  return n.value;
}

inline Matrix Var::adjoint() const {
  const auto& n = tape_->node(id_);
  if (n.adjoint.size() == 0) return Matrix::Zero(n.rows, n.cols);
  return n.adjoint;
}

namespace detail {

inline Tape& same_tape(const char* op, Var a, Var b) {
  if (!a.valid() || !b.valid()) throw ContractError(std::string(op) + ": invalid operand");
  if (a.tape() != b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
  return *a.tape();
}

inline Tape& tape_of(const char* op, Var a) {
  if (!a.valid()) throw ContractError(std::string(op) + ": invalid operand");
  return *a.tape();
}

[[noreturn]] inline void shape_mismatch(const char* op, Var a, Var b) {
  throw DimensionError(std::string(op) + ": " + shape_str(a.rows(), a.cols()) + " vs " +
                       shape_str(b.rows(), b.cols()));
}

inline void require_same_shape(const char* op, Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch(op, a, b);
}

// Unary elementwise op given y = f(x) and dy/dx expressed through (x, y).
template <class F, class DF>
Var unary(OpTag tag, Var a, F f, DF df) {
  Tape& t = tape_of(op_name(tag).data(), a);
  const std::size_t ia = a.id();
  return t.record(
      tag, a.rows(), a.cols(), {ia},
      [ia, f](Tape& tp, Tape::Node& n) { n.value = f(tp.value_of(ia)); },
      [ia, df](Tape& tp, const Tape::Node& n) {
        tp.adjoint_of(ia).array() += n.adjoint.array() * df(tp.value_of(ia), n.value).array();
      });
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape("matmul", a, b);
  if (a.cols() != b.rows()) detail::shape_mismatch("matmul", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(
      OpTag::kMatMul, a.rows(), b.cols(), {ia, ib},
      [ia, ib](Tape& tp, Tape::Node& n) { n.value.noalias() = tp.value_of(ia) * tp.value_of(ib); },
      [ia, ib](Tape& tp, const Tape::Node& n) {
        if (tp.wants_grad(ia)) tp.adjoint_of(ia).noalias() += n.adjoint * tp.value_of(ib).transpose();
        if (tp.wants_grad(ib)) tp.adjoint_of(ib).noalias() += tp.value_of(ia).transpose() * n.adjoint;
      });
}

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape("add", a, b);
  detail::require_same_shape("add", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(
      OpTag::kAdd, a.rows(), a.cols(), {ia, ib},
      [ia, ib](Tape& tp, Tape::Node& n) { n.value = tp.value_of(ia) + tp.value_of(ib); },
      [ia, ib](Tape& tp, const Tape::Node& n) {
        if (tp.wants_grad(ia)) tp.adjoint_of(ia) += n.adjoint;
        if (tp.wants_grad(ib)) tp.adjoint_of(ib) += n.adjoint;
      });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape("sub", a, b);
  detail::require_same_shape("sub", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(
      OpTag::kSub, a.rows(), a.cols(), {ia, ib},
      [ia, ib](Tape& tp, Tape::Node& n) { n.value = tp.value_of(ia) - tp.value_of(ib); },
      [ia, ib](Tape& tp, const Tape::Node& n) {
        if (tp.wants_grad(ia)) tp.adjoint_of(ia) += n.adjoint;
        if (tp.wants_grad(ib)) tp.adjoint_of(ib) -= n.adjoint;
      });
}

// Elementwise (Hadamard) product.
inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape("mul", a, b);
  detail::require_same_shape("mul", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(
      OpTag::kMul, a.rows(), a.cols(), {ia, ib},
      [ia, ib](Tape& tp, Tape::Node& n) {
        n.value = tp.value_of(ia).cwiseProduct(tp.value_of(ib));
      },
      [ia, ib](Tape& tp, const Tape::Node& n) {
        if (tp.wants_grad(ia)) tp.adjoint_of(ia) += n.adjoint.cwiseProduct(tp.value_of(ib));
        if (tp.wants_grad(ib)) tp.adjoint_of(ib) += n.adjoint.cwiseProduct(tp.value_of(ia));
      });
}

// a (r x c) + row (1 x c) broadcast over rows.
inline Var add_row(Var a, Var row) {
  Tape& t = detail::same_tape("add_row", a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) detail::shape_mismatch("add_row", a, row);
  const std::size_t ia = a.id(), ib = row.id();
  return t.record(
      OpTag::kAddRow, a.rows(), a.cols(), {ia, ib},
      [ia, ib](Tape& tp, Tape::Node& n) {
        n.value = tp.value_of(ia);
        n.value.rowwise() += tp.value_of(ib).row(0);
      },
      [ia, ib](Tape& tp, const Tape::Node& n) {
        if (tp.wants_grad(ia)) tp.adjoint_of(ia) += n.adjoint;
        if (tp.wants_grad(ib)) tp.adjoint_of(ib) += n.adjoint.colwise().sum();
      });
}

// a (r x c) scaled row-by-row by column s (r x 1).
inline Var mul_col(Var a, Var s) {
  Tape& t = detail::same_tape("mul_col", a, s);
  if (s.cols() != 1 || s.rows() != a.rows()) detail::shape_mismatch("mul_col", a, s);
  const std::size_t ia = a.id(), is = s.id();
  return t.record(
      OpTag::kMulCol, a.rows(), a.cols(), {ia, is},
      [ia, is](Tape& tp, Tape::Node& n) {
        n.value = tp.value_of(ia).array().colwise() * tp.value_of(is).col(0).array();
      },
      [ia, is](Tape& tp, const Tape::Node& n) {
        if (tp.wants_grad(ia))
          tp.adjoint_of(ia).array() += n.adjoint.array().colwise() * tp.value_of(is).col(0).array();
        if (tp.wants_grad(is))
          tp.adjoint_of(is) += n.adjoint.cwiseProduct(tp.value_of(ia)).rowwise().sum();
      });
}

inline Var scale(Var a, double k) {
  Tape& t = detail::tape_of("scale", a);
  const std::size_t ia = a.id();
  return t.record(
      OpTag::kScale, a.rows(), a.cols(), {ia},
      [ia, k](Tape& tp, Tape::Node& n) { n.value = k * tp.value_of(ia); },
      [ia, k](Tape& tp, const Tape::Node& n) { tp.adjoint_of(ia) += k * n.adjoint; });
}

inline Var add_scalar(Var a, double k) {
  Tape& t = detail::tape_of("add_scalar", a);
  const std::size_t ia = a.id();
  return t.record(
      OpTag::kAddScalar, a.rows(), a.cols(), {ia},
      [ia, k](Tape& tp, Tape::Node& n) { n.value = tp.value_of(ia).array() + k; },
      [ia](Tape& tp, const Tape::Node& n) { tp.adjoint_of(ia) += n.adjoint; });
}

inline Var tanh(Var a) {
  return detail::unary(
      OpTag::kTanh, a, [](const Matrix& x) -> Matrix { return x.array().tanh(); },
      [](const Matrix&, const Matrix& y) -> Matrix { return 1.0 - y.array().square(); });
}

inline Var sigmoid(Var a) {
  return detail::unary(
      OpTag::kSigmoid, a,
      [](const Matrix& x) -> Matrix { return 1.0 / (1.0 + (-x.array()).exp()); },
      [](const Matrix&, const Matrix& y) -> Matrix { return y.array() * (1.0 - y.array()); });
}

// log(1 + e^x), computed without overflow.
inline Var softplus(Var a) {
  return detail::unary(
      OpTag::kSoftplus, a,
      [](const Matrix& x) -> Matrix {
        return x.array().max(0.0) + (-x.array().abs()).exp().log1p();
      },
      [](const Matrix& x, const Matrix&) -> Matrix {
        return 1.0 / (1.0 + (-x.array()).exp());
      });
}

inline Matrix softmax_rows(const Matrix& x) {
  Matrix y = x.colwise() - x.rowwise().maxCoeff();
  y = y.array().exp();
  y.array().colwise() /= y.rowwise().sum().array();
  return y;
}

// Row-wise softmax.
inline Var softmax(Var a) {
  Tape& t = detail::tape_of("softmax", a);
  const std::size_t ia = a.id();
  return t.record(
      OpTag::kSoftmax, a.rows(), a.cols(), {ia},
      [ia](Tape& tp, Tape::Node& n) { n.value = softmax_rows(tp.value_of(ia)); },
      [ia](Tape& tp, const Tape::Node& n) {
        const Matrix& y = n.value;
        Eigen::VectorXd dot = n.adjoint.cwiseProduct(y).rowwise().sum();
        tp.adjoint_of(ia).array() += y.array() * (n.adjoint.colwise() - dot).array();
      });
}

// Horizontal concatenation; all parts share the row count.
inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat: no operands");
  Tape& t = detail::tape_of("concat", parts.front());
  std::vector<std::size_t> ids;
  std::vector<Index> offsets;
  Index cols = 0;
  for (const Var& p : parts) {
    detail::same_tape("concat", parts.front(), p);
    if (p.rows() != parts.front().rows()) detail::shape_mismatch("concat", parts.front(), p);
    ids.push_back(p.id());
    offsets.push_back(cols);
    cols += p.cols();
  }
  const Index rows = parts.front().rows();
  return t.record(
      OpTag::kConcat, rows, cols, ids,
      [ids, offsets, rows, cols](Tape& tp, Tape::Node& n) {
        n.value.resize(rows, cols);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const Matrix& v = tp.value_of(ids[k]);
          n.value.middleCols(offsets[k], v.cols()) = v;
        }
      },
      [ids, offsets](Tape& tp, const Tape::Node& n) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!tp.wants_grad(ids[k])) continue;
          Matrix& g = tp.adjoint_of(ids[k]);
          g += n.adjoint.middleCols(offsets[k], g.cols());
        }
      });
}

// Columns [start, start + count).
inline Var slice(Var a, Index start, Index count) {
  Tape& t = detail::tape_of("slice", a);
  if (start < 0 || count <= 0 || start + count > a.cols())
    throw DimensionError("slice: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") of " + shape_str(a.rows(), a.cols()));
  const std::size_t ia = a.id();
  return t.record(
      OpTag::kSlice, a.rows(), count, {ia},
      [ia, start, count](Tape& tp, Tape::Node& n) {
        n.value = tp.value_of(ia).middleCols(start, count);
      },
      [ia, start, count](Tape& tp, const Tape::Node& n) {
        tp.adjoint_of(ia).middleCols(start, count) += n.adjoint;
      });
}

inline Var column(Var a, Index j) { return slice(a, j, 1); }

inline Var sum(Var a) {
  Tape& t = detail::tape_of("sum", a);
  const std::size_t ia = a.id();
  return t.record(
      OpTag::kSum, 1, 1, {ia},
      [ia](Tape& tp, Tape::Node& n) { n.value = Matrix::Constant(1, 1, tp.value_of(ia).sum()); },
      [ia](Tape& tp, const Tape::Node& n) { tp.adjoint_of(ia).array() += n.adjoint(0, 0); });
}

inline Var mean(Var a) {
  Tape& t = detail::tape_of("mean", a);
  const std::size_t ia = a.id();
  const double inv = 1.0 / static_cast<double>(a.rows() * a.cols());
  return t.record(
      OpTag::kMean, 1, 1, {ia},
      [ia, inv](Tape& tp, Tape::Node& n) {
        n.value = Matrix::Constant(1, 1, tp.value_of(ia).sum() * inv);
      },
      [ia, inv](Tape& tp, const Tape::Node& n) {
        tp.adjoint_of(ia).array() += n.adjoint(0, 0) * inv;
      });
}

// (r x c) -> (r x 1)
inline Var row_sum(Var a) {
  Tape& t = detail::tape_of("row_sum", a);
  const std::size_t ia = a.id();
  return t.record(
      OpTag::kRowSum, a.rows(), 1, {ia},
      [ia](Tape& tp, Tape::Node& n) { n.value = tp.value_of(ia).rowwise().sum(); },
      [ia](Tape& tp, const Tape::Node& n) {
        tp.adjoint_of(ia).colwise() += n.adjoint.col(0);
      });
}

// Row-wise cosine similarity a_r.b_r / (|a_r| |b_r| + eps) -> (r x 1).
inline Var cosine_rows(Var a, Var b, double eps = 1e-8) {
  Tape& t = detail::same_tape("cosine_rows", a, b);
  detail::require_same_shape("cosine_rows", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(
      OpTag::kCosineRows, a.rows(), 1, {ia, ib},
      [ia, ib, eps](Tape& tp, Tape::Node& n) {
        const Matrix& x = tp.value_of(ia);
        const Matrix& y = tp.value_of(ib);
        Eigen::ArrayXd dot = x.cwiseProduct(y).rowwise().sum().array();
        Eigen::ArrayXd den = x.rowwise().norm().array() * y.rowwise().norm().array() + eps;
        n.value = (dot / den).matrix();
      },
      [ia, ib, eps](Tape& tp, const Tape::Node& n) {
        const Matrix& x = tp.value_of(ia);
        const Matrix& y = tp.value_of(ib);
        const Eigen::ArrayXd nx = x.rowwise().norm().array();
        const Eigen::ArrayXd ny = y.rowwise().norm().array();
        const Eigen::ArrayXd dot = x.cwiseProduct(y).rowwise().sum().array();
        const Eigen::ArrayXd den = nx * ny + eps;
        const Eigen::ArrayXd g = n.adjoint.col(0).array();
        // d/dx = y/den - dot * ny * x / (nx * den^2); the second term vanishes at x = 0.
        auto grad_side = [&](const Matrix& self, const Matrix& other, const Eigen::ArrayXd& ns,
                             const Eigen::ArrayXd& no) -> Matrix {
          Eigen::ArrayXd c1 = g / den;
          Eigen::ArrayXd c2 = (ns > 0.0).select(g * dot * no / (ns * den * den), 0.0);
          Matrix out = other.array().colwise() * c1;
          out.array() -= self.array().colwise() * c2;
          return out;
        };
        if (tp.wants_grad(ia)) tp.adjoint_of(ia) += grad_side(x, y, nx, ny);
        if (tp.wants_grad(ib)) tp.adjoint_of(ib) += grad_side(y, x, ny, nx);
      });
}

// Mean over all entries of (pred - target)^2 -> 1x1.
inline Var squared_error(Var pred, const Matrix& target) {
  Tape& t = detail::tape_of("squared_error", pred);
  if (target.rows() != pred.rows() || target.cols() != pred.cols())
    throw DimensionError("squared_error: " + shape_str(pred.rows(), pred.cols()) + " vs " +
                         shape_str(target));
  const std::size_t ip = pred.id();
  const double inv = 1.0 / static_cast<double>(target.size());
  return t.record(
      OpTag::kSquaredError, 1, 1, {ip},
      [ip, target, inv](Tape& tp, Tape::Node& n) {
        n.value = Matrix::Constant(1, 1, (tp.value_of(ip) - target).squaredNorm() * inv);
      },
      [ip, target, inv](Tape& tp, const Tape::Node& n) {
        tp.adjoint_of(ip) += (2.0 * inv * n.adjoint(0, 0)) * (tp.value_of(ip) - target);
      });
}

// Mean over rows of -log softmax(logits)[label], fused via log-sum-exp.
inline Var softmax_cross_entropy(Var logits, std::vector<int> labels) {
  Tape& t = detail::tape_of("softmax_cross_entropy", logits);
  if (static_cast<Index>(labels.size()) != logits.rows())
    throw DimensionError("softmax_cross_entropy: " + shape_str(logits.rows(), logits.cols()) +
                         " vs labels [" + std::to_string(labels.size()) + "]");
  for (int l : labels)
    if (l < 0 || l >= logits.cols())
      throw ContractError("softmax_cross_entropy: label " + std::to_string(l) + " outside [0, " +
                          std::to_string(logits.cols()) + ")");
  const std::size_t il = logits.id();
  auto shared = std::make_shared<const std::vector<int>>(std::move(labels));
  return t.record(
      OpTag::kSoftmaxCrossEntropy, 1, 1, {il},
      [il, shared](Tape& tp, Tape::Node& n) {
        const Matrix& z = tp.value_of(il);
        double total = 0.0;
        for (Index r = 0; r < z.rows(); ++r) {
          const double m = z.row(r).maxCoeff();
          const double lse = m + std::log((z.row(r).array() - m).exp().sum());
          total += lse - z(r, (*shared)[static_cast<std::size_t>(r)]);
        }
        n.value = Matrix::Constant(1, 1, total / static_cast<double>(z.rows()));
      },
      [il, shared](Tape& tp, const Tape::Node& n) {
        const Matrix& z = tp.value_of(il);
        Matrix g = softmax_rows(z);
        for (Index r = 0; r < z.rows(); ++r) g(r, (*shared)[static_cast<std::size_t>(r)]) -= 1.0;
        tp.adjoint_of(il) += (n.adjoint(0, 0) / static_cast<double>(z.rows())) * g;
      });
}

// Identity whose forward pass throws NumericError when any entry is
// non-finite, or (with require_positive) not strictly positive.
inline Var guard(Var a, std::string what, bool require_positive = false) {
  Tape& t = detail::tape_of("guard", a);
  const std::size_t ia = a.id();
  return t.record(
      OpTag::kGuard, a.rows(), a.cols(), {ia},
      [ia, what = std::move(what), require_positive](Tape& tp, Tape::Node& n) {
        const Matrix& x = tp.value_of(ia);
        for (Index i = 0; i < x.size(); ++i) {
          if (!std::isfinite(x(i)))
            throw NumericError(what + ": non-finite entry at index " + std::to_string(i));
          if (require_positive && !(x(i) > 0.0))
            throw ContractError(what + ": entry " + std::to_string(i) + " = " +
                                std::to_string(x(i)) + " is not positive");
        }
        n.value = x;
      },
      [ia](Tape& tp, const Tape::Node& n) { tp.adjoint_of(ia) += n.adjoint; });
}

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar function f(Tape&, Var) -> Var evaluated at `point`.
template <class F>
double grad_check(F&& f, const Matrix& point, double step) {
  if (!(step > 0.0)) throw ContractError("grad_check: step must be positive");
  for (Index i = 0; i < point.size(); ++i)
    if (!std::isfinite(point(i)))
      throw NumericError("grad_check: non-finite input at coordinate " + std::to_string(i));
  Matrix analytic;
  {
    Tape tape;
    Var x = tape.leaf(point);
    Var y = f(tape, x);
    const double v = tape.evaluate(y)(0, 0);
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite value at the base point");
    tape.backward(y);
    analytic = x.adjoint();
  }
  auto eval_at = [&](const Matrix& p) {
    Tape tape;
    Var y = f(tape, tape.constant(p));
    return tape.evaluate(y)(0, 0);
  };
  double worst = 0.0;
  Matrix probe = point;
  for (Index i = 0; i < point.size(); ++i) {
    const double orig = probe(i);
    probe(i) = orig + step;
    const double up = eval_at(probe);
    probe(i) = orig - step;
    const double down = eval_at(probe);
    probe(i) = orig;
    const double numeric = (up - down) / (2.0 * step);
    if (!std::isfinite(numeric) || !std::isfinite(analytic(i)))
      throw NumericError("grad_check: non-finite value at coordinate " + std::to_string(i));
    worst = std::max(worst, std::abs(analytic(i) - numeric) / std::max(1.0, std::abs(analytic(i))));
  }
  return worst;
}

}  // namespace uwm
