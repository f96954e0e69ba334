#include "grembed/diff.hpp"

#include <cmath>
#include <string>

#include "grembed/error.hpp"

namespace grembed::diff {

namespace {

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape(a.value()) + " vs " + shape(b.value()));
  }
}

void require_finite(const Matrix& m, const char* op) {
  if (!m.allFinite()) throw NumericError(std::string(op) + ": non-finite input");
}

Tape& tape_of(const Var& a) { return a.tape(); }

bool any_grad(std::span<const Var> parts) {
  for (const auto& p : parts)
    if (p.requires_grad()) return true;
  return false;
}

double stable_log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// Var / Tape -------------------------------------------------------------------------

const Matrix& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }
double Var::scalar() const {
  if (rows() != 1 || cols() != 1) throw ContractError("scalar() on a " + shape(value()) + " tensor");
  return value()(0, 0);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, true, {}, &p});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, bool requires_grad, BackwardFn fn) {
  nodes_.push_back(Node{std::move(value), {}, requires_grad, requires_grad ? std::move(fn) : BackwardFn{}, nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& loss) {
  if (&loss.tape() != this) throw ContractError("loss belongs to a different tape");
  if (loss.rows() != 1 || loss.cols() != 1) throw ContractError("backward needs a scalar loss, got " + shape(loss.value()));
  if (!loss.requires_grad()) {
    clear();
    return;
  }
  nodes_[loss.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols()) n.param->zero_grad();
      n.param->grad += n.grad;
    } else if (n.backward) {
      n.backward(*this, n.grad);
    }
  }
  clear();
}

// Arithmetic -----------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + shape(a.value()) + " * " + shape(b.value()));
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value() * b.value(), a.requires_grad() || b.requires_grad(),
                           [ia, ib](Tape& t, const Matrix& g) {
                             if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
                             if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
                           });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value() + b.value(), a.requires_grad() || b.requires_grad(),
                           [ia, ib](Tape& t, const Matrix& g) {
                             t.accumulate(ia, g);
                             t.accumulate(ib, g);
                           });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value() - b.value(), a.requires_grad() || b.requires_grad(),
                           [ia, ib](Tape& t, const Matrix& g) {
                             t.accumulate(ia, g);
                             if (t.requires_grad(ib)) t.accumulate(ib, -g);
                           });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value().cwiseProduct(b.value()), a.requires_grad() || b.requires_grad(),
                           [ia, ib](Tape& t, const Matrix& g) {
                             if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                             if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                           });
}

Var scale(const Var& a, double s) {
  const std::size_t ia = a.id();
  return tape_of(a).record(a.value() * s, a.requires_grad(), [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, g * s); });
}

Var add_scalar(const Var& a, double s) {
  const std::size_t ia = a.id();
  return tape_of(a).record(a.value().array() + s, a.requires_grad(),
                           [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

Var one_minus(const Var& a) {
  const std::size_t ia = a.id();
  return tape_of(a).record((1.0 - a.value().array()).matrix(), a.requires_grad(),
                           [ia](Tape& t, const Matrix& g) { t.accumulate(ia, -g); });
}

Var transpose(const Var& a) {
  const std::size_t ia = a.id();
  return tape_of(a).record(a.value().transpose(), a.requires_grad(),
                           [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

Var add_row_broadcast(const Var& a, const Var& b) {
  if (b.rows() != 1 || b.cols() != a.cols()) {
    throw ShapeError("add_row_broadcast: " + shape(a.value()) + " + " + shape(b.value()));
  }
  const std::size_t ia = a.id(), ib = b.id();
  Matrix out = a.value().rowwise() + b.value().row(0);
  return tape_of(a).record(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
  });
}

Var mul_col_broadcast(const Var& a, const Var& b) {
  if (b.cols() != 1 || b.rows() != a.rows()) {
    throw ShapeError("mul_col_broadcast: " + shape(a.value()) + " * " + shape(b.value()));
  }
  const std::size_t ia = a.id(), ib = b.id();
  Matrix out = a.value().array().colwise() * b.value().col(0).array();
  return tape_of(a).record(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, (g.array().colwise() * t.value(ib).col(0).array()).matrix());
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)).rowwise().sum());
  });
}

Var spmm(const SparseMatrix& m, const Var& a) {
  if (m.cols() != a.rows()) throw ShapeError("spmm: sparse " + std::to_string(m.rows()) + "x" +
                                             std::to_string(m.cols()) + " * " + shape(a.value()));
  const std::size_t ia = a.id();
  Matrix out = m * a.value();
  // The sparse operand is copied into the closure so callers may free theirs.
  return tape_of(a).record(std::move(out), a.requires_grad(),
                           [ia, mt = SparseMatrix(m.transpose())](Tape& t, const Matrix& g) {
                             t.accumulate(ia, Matrix(mt * g));
                           });
}

// Structure --------------------------------------------------------------------------------

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  Index rows = 0;
  const Index cols = parts[0].cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Index> starts;
  Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    ids.push_back(p.id());
    starts.push_back(r);
    r += p.rows();
  }
  return parts[0].tape().record(std::move(out), any_grad(parts), [ids, starts](Tape& t, const Matrix& g) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (t.requires_grad(ids[i])) t.accumulate(ids[i], g.middleRows(starts[i], t.value(ids[i]).rows()));
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols of nothing");
  Index cols = 0;
  const Index rows = parts[0].rows();
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Index> starts;
  Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    ids.push_back(p.id());
    starts.push_back(c);
    c += p.cols();
  }
  return parts[0].tape().record(std::move(out), any_grad(parts), [ids, starts](Tape& t, const Matrix& g) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (t.requires_grad(ids[i])) t.accumulate(ids[i], g.middleCols(starts[i], t.value(ids[i]).cols()));
    }
  });
}

Var concat_rows(std::initializer_list<Var> parts) { return concat_rows(std::span<const Var>(parts.begin(), parts.size())); }
Var concat_cols(std::initializer_list<Var> parts) { return concat_cols(std::span<const Var>(parts.begin(), parts.size())); }

Var gather_rows(const Var& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw IndexError("gather_rows: row " + std::to_string(rows[i]) + " out of range");
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  const std::size_t ia = a.id();
  const Index n = a.rows();
  return tape_of(a).record(std::move(out), a.requires_grad(),
                           [ia, n, idx = std::vector<Index>(rows.begin(), rows.end())](Tape& t, const Matrix& g) {
                             Matrix acc = Matrix::Zero(n, g.cols());
                             for (std::size_t i = 0; i < idx.size(); ++i) acc.row(idx[i]) += g.row(static_cast<Index>(i));
                             t.accumulate(ia, acc);
                           });
}

Var scatter_add_rows(const Var& a, std::span<const Index> index, Index out_rows) {
  if (static_cast<Index>(index.size()) != a.rows()) throw ShapeError("scatter_add_rows: index length != rows");
  Matrix out = Matrix::Zero(out_rows, a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= out_rows) throw IndexError("scatter_add_rows: target out of range");
    out.row(index[i]) += a.value().row(static_cast<Index>(i));
  }
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(out), a.requires_grad(),
                           [ia, idx = std::vector<Index>(index.begin(), index.end())](Tape& t, const Matrix& g) {
                             Matrix acc(static_cast<Index>(idx.size()), g.cols());
                             for (std::size_t i = 0; i < idx.size(); ++i) acc.row(static_cast<Index>(i)) = g.row(idx[i]);
                             t.accumulate(ia, acc);
                           });
}

Var segment_max_rows(const Var& a, const std::vector<std::vector<Index>>& groups) {
  const auto ng = static_cast<Index>(groups.size());
  const Index c = a.cols();
  Matrix out = Matrix::Zero(ng, c);
  // argmax source row per output entry, -1 for empty groups
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> arg = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>::Constant(ng, c, -1);
  for (Index gi = 0; gi < ng; ++gi) {
    const auto& members = groups[static_cast<std::size_t>(gi)];
    for (Index j = 0; j < c; ++j) {
      for (Index r : members) {
        if (r < 0 || r >= a.rows()) throw IndexError("segment_max_rows: row out of range");
        if (arg(gi, j) < 0 || a.value()(r, j) > out(gi, j)) {
          out(gi, j) = a.value()(r, j);
          arg(gi, j) = r;
        }
      }
    }
  }
  const std::size_t ia = a.id();
  const Index n = a.rows();
  return tape_of(a).record(std::move(out), a.requires_grad(), [ia, n, arg](Tape& t, const Matrix& g) {
    Matrix acc = Matrix::Zero(n, g.cols());
    for (Index i = 0; i < g.rows(); ++i)
      for (Index j = 0; j < g.cols(); ++j)
        if (arg(i, j) >= 0) acc(arg(i, j), j) += g(i, j);
    t.accumulate(ia, acc);
  });
}

// Reductions ---------------------------------------------------------------------------------

Var reduce_sum(const Var& a) {
  const std::size_t ia = a.id();
  const Index r = a.rows(), c = a.cols();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return tape_of(a).record(std::move(out), a.requires_grad(),
                           [ia, r, c](Tape& t, const Matrix& g) { t.accumulate(ia, Matrix::Constant(r, c, g(0, 0))); });
}

Var sum_cols(const Var& a) {
  const std::size_t ia = a.id();
  const Index c = a.cols();
  return tape_of(a).record(a.value().rowwise().sum(), a.requires_grad(),
                           [ia, c](Tape& t, const Matrix& g) { t.accumulate(ia, g.col(0).replicate(1, c)); });
}

Var sum_rows(const Var& a) {
  const std::size_t ia = a.id();
  const Index r = a.rows();
  return tape_of(a).record(a.value().colwise().sum(), a.requires_grad(),
                           [ia, r](Tape& t, const Matrix& g) { t.accumulate(ia, g.row(0).replicate(r, 1)); });
}

Var dot_rows(const Var& a, const Var& b) {
  require_same_shape(a, b, "dot_rows");
  const std::size_t ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return tape_of(a).record(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, (t.value(ib).array().colwise() * g.col(0).array()).matrix());
    if (t.requires_grad(ib)) t.accumulate(ib, (t.value(ia).array().colwise() * g.col(0).array()).matrix());
  });
}

Var squared_distance(const Var& a, const Var& b) {
  require_same_shape(a, b, "squared_distance");
  const std::size_t ia = a.id(), ib = b.id();
  Matrix out = (a.value() - b.value()).rowwise().squaredNorm();
  return tape_of(a).record(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, const Matrix& g) {
    const Matrix d = 2.0 * ((t.value(ia) - t.value(ib)).array().colwise() * g.col(0).array()).matrix();
    t.accumulate(ia, d);
    if (t.requires_grad(ib)) t.accumulate(ib, -d);
  });
}

// Elementwise ------------------------------------------------------------------------------------

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  const std::size_t ia = a.id();
  return tape_of(a).record(out, a.requires_grad(), [ia, out](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(out.cwiseProduct((1.0 - out.array()).matrix())));
  });
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh().matrix();
  const std::size_t ia = a.id();
  return tape_of(a).record(out, a.requires_grad(), [ia, out](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct((1.0 - out.array().square()).matrix()));
  });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(out), a.requires_grad(), [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, (t.value(ia).array() > 0.0).select(g, 0.0).matrix());
  });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp().matrix();
  const std::size_t ia = a.id();
  return tape_of(a).record(out, a.requires_grad(),
                           [ia, out](Tape& t, const Matrix& g) { t.accumulate(ia, g.cwiseProduct(out)); });
}

Var log(const Var& a) {
  require_finite(a.value(), "log");
  if ((a.value().array() <= 0.0).any()) throw NumericError("log: non-positive input");
  const std::size_t ia = a.id();
  return tape_of(a).record(a.value().array().log().matrix(), a.requires_grad(), [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseQuotient(t.value(ia)));
  });
}

Var log_sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) { return stable_log_sigmoid(x); });
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(out), a.requires_grad(), [ia](Tape& t, const Matrix& g) {
    // d/dx log sigma(x) = sigma(-x)
    t.accumulate(ia, g.cwiseProduct(t.value(ia).unaryExpr([](double x) { return stable_sigmoid(-x); })));
  });
}

Var square(const Var& a) {
  const std::size_t ia = a.id();
  return tape_of(a).record(a.value().array().square().matrix(), a.requires_grad(), [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, 2.0 * g.cwiseProduct(t.value(ia)));
  });
}

Var abs(const Var& a) {
  const std::size_t ia = a.id();
  return tape_of(a).record(a.value().cwiseAbs(), a.requires_grad(), [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(t.value(ia).unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); })));
  });
}

Var sqrt_eps(const Var& a, double eps) {
  Matrix out = (a.value().array() + eps).sqrt().matrix();
  const std::size_t ia = a.id();
  return tape_of(a).record(out, a.requires_grad(), [ia, out](Tape& t, const Matrix& g) {
    t.accumulate(ia, (0.5 * g.array() / out.array()).matrix());
  });
}

// Row-wise ------------------------------------------------------------------------------------

Var softmax_rows(const Var& a) {
  require_finite(a.value(), "softmax_rows");
  Matrix out = (a.value().colwise() - a.value().rowwise().maxCoeff()).array().exp().matrix();
  out.array().colwise() /= out.rowwise().sum().array();
  const std::size_t ia = a.id();
  return tape_of(a).record(out, a.requires_grad(), [ia, out](Tape& t, const Matrix& g) {
    // dx = y * (g - <g, y>) per row
    const Vector inner = g.cwiseProduct(out).rowwise().sum();
    t.accumulate(ia, out.cwiseProduct((g.colwise() - inner)));
  });
}

Var l2_normalize_rows(const Var& a) {
  const Vector norms = a.value().rowwise().norm();
  Matrix out = a.value();
  for (Index i = 0; i < out.rows(); ++i) {
    if (norms(i) > 0.0) out.row(i) /= norms(i);
  }
  const std::size_t ia = a.id();
  return tape_of(a).record(out, a.requires_grad(), [ia, out, norms](Tape& t, const Matrix& g) {
    Matrix dx = Matrix::Zero(out.rows(), out.cols());
    for (Index i = 0; i < out.rows(); ++i) {
      if (norms(i) <= 0.0) continue;
      const double proj = g.row(i).dot(out.row(i));
      dx.row(i) = (g.row(i) - proj * out.row(i)) / norms(i);
    }
    t.accumulate(ia, dx);
  });
}

// Optimizer ------------------------------------------------------------------------------------

Optimizer::Optimizer(OptimizerConfig config, std::vector<Parameter*> params)
    : config_(config), params_(std::move(params)) {
  for (Parameter* p : params_) {
    if (p->grad.rows() != p->rows() || p->grad.cols() != p->cols()) p->zero_grad();
    if (config_.kind == OptimizerConfig::Kind::adam) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
}

void Optimizer::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Optimizer::step() {
  for (Parameter* p : params_) {
    if (!p->grad.allFinite()) throw NumericError("non-finite gradient at optimizer step " + std::to_string(t_ + 1));
  }
  ++t_;
  if (config_.kind == OptimizerConfig::Kind::sgd) {
    for (Parameter* p : params_) p->value -= config_.lr * p->grad;
  } else {
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter& p = *params_[i];
      m_[i] = b1 * m_[i] + (1.0 - b1) * p.grad;
      v_[i] = b2 * v_[i] + (1.0 - b2) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= config_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.eps);
    }
  }
  zero_grad();
}

}  // namespace grembed::diff
