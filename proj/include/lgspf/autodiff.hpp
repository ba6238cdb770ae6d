// SPDX-License-Identifier: Apache-2.0
#pragma once

// A small reverse-mode tape over dense matrices.
//
// Values are recorded eagerly; each op stores a closure that pushes its output
// gradient back into its inputs. Nodes that cannot reach a trainable parameter
// carry no closure, so frozen weights never have gradients computed for them.

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "lgspf/tensor.hpp"

namespace lgspf {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = false;
  // Number of backward passes whose gradient reached this parameter.
  std::size_t grad_writes = 0;

  Parameter() = default;
  Parameter(std::string n, Matrix v, bool train = false)
      : name(std::move(n)), value(std::move(v)), trainable(train) {}

  void zero_grad();
};

namespace ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Matrix& value() const;
  bool requires_grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the tape and the gradient flowing into the op's output.
  using Backward = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  // A tape with gradients disabled records values only.
  explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Tracked when p.trainable; otherwise behaves as a constant copy-free view.
  Var parameter(Parameter& p);
  // Untracked leaf that references `value` without copying; it must outlive the tape.
  Var view(const Matrix& value);
  bool grad_enabled() const { return grad_enabled_; }

  // Records an op output. `backward` is dropped when requires_grad is false.
  Var push(Matrix value, bool requires_grad, Backward backward);

  const Matrix& value(Var v) const {
    const Node& n = nodes_[v.id()];
    return n.value != nullptr ? *n.value : n.owned;
  }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  // Gradient buffer of v, allocated as zeros on first access.
  Matrix& grad(Var v);
  bool has_grad(Var v) const { return !nodes_[v.id()].grad.empty(); }
  // Keeps v's gradient readable after backward() (dropped by default).
  void retain_grad(Var v) { nodes_[v.id()].retain = true; }

  // Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to parameters.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix owned;
    const Matrix* value = nullptr;  // set for parameter leaves
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    bool retain = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }
inline bool Var::requires_grad() const { return tape_->requires_grad(*this); }

// Contiguous sequences stacked row-wise in one matrix.
// Packed sequences. With prefix > 0, rows [0, prefix) hold one shared prefix
// that every sequence logically begins with; a sequence's own rows then sit
// at positions prefix, prefix + 1, ... Results match running each full
// sequence separately.
struct SeqLayout {
  std::vector<std::size_t> starts;
  std::vector<std::size_t> lengths;
  std::size_t prefix = 0;

  static SeqLayout uniform(std::size_t count, std::size_t length);
  static SeqLayout shared(std::size_t prefix_rows);
  void append(std::size_t length);
  std::size_t total_rows() const;
  std::size_t count() const { return lengths.size(); }
  // Longest logical sequence, prefix included.
  std::size_t max_length() const;
};

Var add(Var a, Var b);
Var scale(Var a, double s);
// x * w^T, the linear-layer convention (w is out x in).
Var matmul_nt(Var x, Var w);
Var matmul(Var a, Var b);
// Adds a 1 x c row to every row of x.
Var add_row(Var x, Var bias);
Var elu(Var x, double alpha = 1.0);
Var silu(Var x);
Var concat_cols(Var a, Var b);
Var concat_cols(const std::vector<Var>& parts);
Var vstack(const std::vector<Var>& parts);
Var gather_rows(Var x, std::vector<std::size_t> rows);
// Copy of `base` with row positions[i] replaced by row i of `rows`.
Var replace_rows(Var base, Var rows, std::vector<std::size_t> positions);
Var sum(Var x);
// Scales each row to L2 norm `target` (rows with zero norm stay zero).
Var rescale_rows(Var x, double target);
// RMS normalization with per-column gain (1 x c).
Var rms_norm(Var x, Var gain, double eps = 1e-6);
// Rotary position encoding applied per head to pairs (2i, 2i+1); positions
// restart at zero for each sequence of the layout.
Var rope(Var x, const SeqLayout& layout, std::size_t heads, double base);
// Multi-head causal self-attention over each sequence of the layout.
Var causal_attention(Var q, Var k, Var v, const SeqLayout& layout, std::size_t heads);
// Sum over rows r of log softmax(logits[r])[targets[r]]; returns 1 x 1.
Var log_softmax_pick(Var logits, std::vector<std::size_t> targets);

// Row-wise log-softmax of a plain matrix.
Matrix log_softmax_rows(const Matrix& logits);

}  // namespace ad
}  // namespace lgspf
