#pragma once

// Reverse-mode differentiation over row-major double matrices.
//
// A Tape records every operation of one forward pass. Each op stores its
// value and a closure that pushes the output gradient back to its inputs.
// Parameters live outside the tape; Tape::param() binds one as a leaf whose
// gradient is accumulated into Parameter::grad on backward().

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace stylebook {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using ParameterList = std::vector<Parameter*>;

class Tape;

/// Handle to a node on a tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(Parameter& p);

  /// Creates an op node. `backward` reads the node's gradient and accumulates
  /// into inputs through accumulate(). Nodes that need no gradient skip it.
  Var record(Matrix value, bool needs_grad, std::function<void(const Matrix&)> backward);

  bool needs_grad(const Var& v) const { return nodes_[v.id()]->needs_grad; }

  /// Adds `g` into the gradient of `v` (no-op if v does not need gradients).
  void accumulate(const Var& v, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(const Var& v, const Expr& g) {
    Node& n = *nodes_[v.id()];
    if (!n.needs_grad) return;
    ensure_grad(n);
    n.grad += g;
  }
  Matrix& grad_ref(const Var& v);

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and runs all closures in
  /// reverse order, then flushes leaf gradients into their Parameters.
  void backward(const Var& scalar_out);

  const Matrix& value(int id) const { return nodes_[id]->value; }
  const Matrix& grad(int id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    std::function<void(const Matrix&)> backward;
  };
  static void ensure_grad(Node& n) {
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }

  std::vector<std::unique_ptr<Node>> nodes_;
  Matrix empty_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline const Matrix& Var::grad() const { return tape_->grad(id_); }

namespace ops {

Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
/// x * w + b (b is 1 x out, broadcast over rows).
Var linear(const Var& x, const Var& w, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Adds a 1 x n row vector to every row.
Var add_row(const Var& a, const Var& row);
/// Multiplies row r of `a` by factors[r].
Var scale_rows(const Var& a, const RowVector& factors);

Var relu(const Var& a);
Var silu(const Var& a);
Var tanh(const Var& a);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
/// out.row(i) = a.row(index[i]); index -1 yields a zero row.
Var gather_rows(const Var& a, std::span<const int> index);

Var softmax_rows(const Var& logits);
/// Mean over rows of -log softmax(logits)[label].
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

/// 1-D convolution over time with zero "same" padding, applied independently
/// to each block of `seq_len` consecutive rows. `w` is (kernel*in) x out with
/// tap-major layout: rows [k*in, (k+1)*in) hold tap k (offset k - kernel/2).
Var conv1d(const Var& x, const Var& w, const Var& b, Eigen::Index seq_len, int kernel);
/// Averages consecutive row pairs within each sequence; seq_len must be even.
Var avg_pool2(const Var& x, Eigen::Index seq_len);
/// Repeats every row twice.
Var upsample2(const Var& x);

/// Scaled dot-product attention on already projected inputs.
///
/// q has G*q_len rows, k and v have G*kv_len rows (or exactly kv_len rows,
/// shared by all G groups). Columns are split into `heads` equal slices.
/// If `weights_out` is non-null it receives the head-averaged attention
/// weights, stacked as (G*q_len) x kv_len.
Var attention(const Var& q, const Var& k, const Var& v, int heads, Eigen::Index q_len, Eigen::Index kv_len,
              Matrix* weights_out = nullptr);

Var mean_all(const Var& a);
Var sum_all(const Var& a);
/// Mean of (a - b)^2 over all entries.
Var mse(const Var& a, const Var& b);

}  // namespace ops

}  // namespace stylebook
