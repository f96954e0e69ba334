#pragma once

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "grembed/types.hpp"

/// Dense reverse-mode differentiation over Eigen matrices.
///
/// A Tape records every operation whose inputs require gradients. Values are
/// row-major in meaning (one row per node/sample) even though Eigen stores
/// them column-major. Parameters live outside the tape; backward() adds into
/// Parameter::grad and then clears the tape.
namespace grembed::diff {

/// Trainable leaf tensor that outlives any single tape.
class Parameter {
 public:
  Parameter() = default;
  explicit Parameter(Matrix init) : value(std::move(init)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  Index rows() const { return value.rows(); }
  Index cols() const { return value.cols(); }
  Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }

  Matrix value;
  Matrix grad;
};

class Tape;

/// Handle to a recorded tensor.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  /// Convenience for 1x1 results.
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Parameter& p);
  /// Records an op result. `fn` runs during backward only when `requires_grad`.
  Var record(Matrix value, bool requires_grad, BackwardFn fn);

  /// Reverse sweep from a 1x1 loss, then clears the tape.
  void backward(const Var& loss);
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Adds `g` into the gradient of node `id` when it requires grad.
  void accumulate(std::size_t id, const Matrix& g);

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    if (!nodes_[id].requires_grad) return;
    accumulate(id, Matrix(g));
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  // deque keeps value references stable while recording.
  std::deque<Node> nodes_;
};

// Arithmetic ---------------------------------------------------------------------
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Elementwise product.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var one_minus(const Var& a);
Var transpose(const Var& a);
/// a (n x c) + b (1 x c) broadcast over rows.
Var add_row_broadcast(const Var& a, const Var& b);
/// a (n x c) scaled row-wise by b (n x 1).
Var mul_col_broadcast(const Var& a, const Var& b);
/// Constant sparse matrix times a.
Var spmm(const SparseMatrix& m, const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator-(const Var& a) { return scale(a, -1.0); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

// Structure ------------------------------------------------------------------------
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::initializer_list<Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var gather_rows(const Var& a, std::span<const Index> rows);
/// out.row(index[i]) += a.row(i); out has `out_rows` rows.
Var scatter_add_rows(const Var& a, std::span<const Index> index, Index out_rows);
/// Row g of the output is the elementwise max over rows groups[g] of a; empty groups give zeros.
Var segment_max_rows(const Var& a, const std::vector<std::vector<Index>>& groups);

// Reductions -------------------------------------------------------------------------
Var reduce_sum(const Var& a);
/// n x c -> n x 1.
Var sum_cols(const Var& a);
/// n x c -> 1 x c.
Var sum_rows(const Var& a);
Var dot_rows(const Var& a, const Var& b);
Var squared_distance(const Var& a, const Var& b);

// Elementwise nonlinearities ---------------------------------------------------------
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
/// log(sigmoid(a)), stable for large |a|.
Var log_sigmoid(const Var& a);
Var square(const Var& a);
/// Elementwise absolute value (subgradient 0 at 0).
Var abs(const Var& a);
/// sqrt(a + eps), elementwise.
Var sqrt_eps(const Var& a, double eps);

// Row-wise ----------------------------------------------------------------------------
Var softmax_rows(const Var& a);
/// Zero rows map to zero rows.
Var l2_normalize_rows(const Var& a);

// Optimizers ---------------------------------------------------------------------------

struct OptimizerConfig {
  enum class Kind { sgd, adam };
  Kind kind = Kind::sgd;
  double lr = 0.025;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First-order optimizer over a fixed parameter set. step() consumes and
/// zeroes the accumulated gradients.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<Parameter*> params);

  void step();
  void zero_grad();
  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  long steps() const { return t_; }

 private:
  OptimizerConfig config_;
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

}  // namespace grembed::diff
