// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#include "autodiff.hpp"

#include "errors.hpp"

#include <cmath>
#include <limits>

namespace mcur::ad {

const Matrix& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const auto& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw InvalidArgument("scalar() on a non 1x1 node");
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant_scalar(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, true});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var{this, id};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const auto& in : inputs) needs = needs || requires_grad(in.id);
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, nullptr, needs});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::accumulate(int id, const Matrix& g) { accumulate_expr(id, g); }

Matrix Tape::grad(Var v) const {
  const auto& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  auto& r = nodes_[static_cast<std::size_t>(root.id)];
  if (r.value.size() != 1) throw InvalidArgument("backward() needs a 1x1 root");
  if (!r.requires_grad) return;
  r.grad = Matrix::Ones(1, 1);
  for (int id = root.id; id >= 0; --id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr) {
      if (n.param->grad.size() == 0) n.param->zero_grad();
      n.param->grad += n.grad;
    }
  }
}

namespace {

void check_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()) + ")");
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw InvalidArgument("matmul: inner dimensions differ");
  Matrix out = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const auto& g = t.upstream(self);
    if (t.requires_grad(ia)) t.accumulate_expr(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate_expr(ib, t.value(ia).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw InvalidArgument("matmul_nt: inner dimensions differ");
  Matrix out = a.value() * b.value().transpose();
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const auto& g = t.upstream(self);
    if (t.requires_grad(ia)) t.accumulate_expr(ia, g * t.value(ib));
    if (t.requires_grad(ib)) t.accumulate_expr(ib, g.transpose() * t.value(ia));
  });
}

Var transpose(Var a) {
  Matrix out = a.value().transpose();
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, int self) {
    t.accumulate_expr(ia, t.upstream(self).transpose());
  });
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.upstream(self));
    t.accumulate(ib, t.upstream(self));
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.upstream(self));
    t.accumulate_expr(ib, -t.upstream(self));
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const auto& g = t.upstream(self);
    if (t.requires_grad(ia)) t.accumulate_expr(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate_expr(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value() * s;
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia, s](Tape& t, int self) {
    t.accumulate_expr(ia, t.upstream(self) * s);
  });
}

Var add_scalar(Var a, double s) {
  Matrix out = a.value().array() + s;
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, int self) { t.accumulate(ia, t.upstream(self)); });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw InvalidArgument("add_row: row shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  const int ia = a.id, ir = row.id;
  return a.tape->record(std::move(out), {a, row}, [ia, ir](Tape& t, int self) {
    const auto& g = t.upstream(self);
    t.accumulate(ia, g);
    if (t.requires_grad(ir)) t.accumulate_expr(ir, g.colwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw InvalidArgument("mul_row: row shape mismatch");
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  const int ia = a.id, ir = row.id;
  return a.tape->record(std::move(out), {a, row}, [ia, ir](Tape& t, int self) {
    const auto& g = t.upstream(self);
    if (t.requires_grad(ia)) {
      Matrix ga = g.array().rowwise() * t.value(ir).row(0).array();
      t.accumulate(ia, ga);
    }
    if (t.requires_grad(ir)) t.accumulate_expr(ir, g.cwiseProduct(t.value(ia)).colwise().sum());
  });
}

Var mul_col(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw InvalidArgument("mul_col: column shape mismatch");
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  const int ia = a.id, ic = col.id;
  return a.tape->record(std::move(out), {a, col}, [ia, ic](Tape& t, int self) {
    const auto& g = t.upstream(self);
    if (t.requires_grad(ia)) {
      Matrix ga = g.array().colwise() * t.value(ic).col(0).array();
      t.accumulate(ia, ga);
    }
    if (t.requires_grad(ic)) t.accumulate_expr(ic, g.cwiseProduct(t.value(ia)).rowwise().sum());
  });
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, int self) {
    Matrix g = (t.value(ia).array() > 0.0).select(t.upstream(self), 0.0);
    t.accumulate(ia, g);
  });
}

Var exp(Var a) {
  Matrix out = a.value().array().exp();
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, int self) {
    t.accumulate_expr(ia, t.upstream(self).cwiseProduct(t.value(self)));
  });
}

Var log(Var a) {
  Matrix out = a.value().array().log();
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, int self) {
    t.accumulate_expr(ia, t.upstream(self).cwiseQuotient(t.value(ia)));
  });
}

Var abs(Var a) {
  Matrix out = a.value().cwiseAbs();
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, int self) {
    Matrix sign = t.value(ia).unaryExpr([](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
    t.accumulate_expr(ia, t.upstream(self).cwiseProduct(sign));
  });
}

Var square(Var a) {
  Matrix out = a.value().array().square();
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, int self) {
    t.accumulate_expr(ia, 2.0 * t.upstream(self).cwiseProduct(t.value(ia)));
  });
}

Var sigmoid(Var a) {
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, int self) {
    const auto& s = t.value(self);
    Matrix local = s.array() * (1.0 - s.array());
    t.accumulate_expr(ia, t.upstream(self).cwiseProduct(local));
  });
}

Var clamp(Var a, double lo, double hi) {
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia, lo, hi](Tape& t, int self) {
    const auto& x = t.value(ia);
    Matrix g = (x.array() >= lo && x.array() <= hi).select(t.upstream(self), 0.0);
    t.accumulate(ia, g);
  });
}

Var detach(Var a) { return a.tape->constant(a.value()); }

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, int self) {
    const auto& x = t.value(ia);
    t.accumulate_expr(ia, Matrix::Constant(x.rows(), x.cols(), t.upstream(self)(0, 0)));
  });
}

Var mean(Var a) {
  if (a.value().size() == 0) throw InvalidArgument("mean of an empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var sum_cols(Var a) {
  Matrix out = a.value().rowwise().sum();
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, int self) {
    const auto cols = t.value(ia).cols();
    t.accumulate_expr(ia, t.upstream(self).replicate(1, cols));
  });
}

Var mean_rows(Var a) {
  const double n = static_cast<double>(a.rows());
  Matrix out = a.value().colwise().mean();
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia, n](Tape& t, int self) {
    const auto rows = t.value(ia).rows();
    t.accumulate_expr(ia, (t.upstream(self) / n).replicate(rows, 1));
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_rows: no inputs");
  Tape* tape = parts.front().tape;
  const auto cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw InvalidArgument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  ids.reserve(parts.size());
  offsets.reserve(parts.size());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    ids.push_back(p.id);
    offsets.push_back(r);
    r += p.rows();
  }
  // record() takes an initializer_list; route the requires-grad decision through
  // a representative input.
  Var gate = parts.front();
  for (const auto& p : parts) {
    if (tape->requires_grad(p.id)) {
      gate = p;
      break;
    }
  }
  return tape->record(std::move(out), {gate}, [ids, offsets](Tape& t, int self) {
    const auto& g = t.upstream(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      t.accumulate_expr(ids[k], g.middleRows(offsets[k], t.value(ids[k]).rows()));
    }
  });
}

Var flatten(Var a) {
  const auto rows = a.rows(), cols = a.cols();
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), 1, rows * cols);
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia, rows, cols](Tape& t, int self) {
    t.accumulate_expr(ia, Eigen::Map<const Matrix>(t.upstream(self).data(), rows, cols));
  });
}

Var pick(Var a, const std::vector<int>& index) {
  if (static_cast<Eigen::Index>(index.size()) != a.rows()) throw InvalidArgument("pick: index length mismatch");
  Matrix out(a.rows(), 1);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const int c = index[static_cast<std::size_t>(r)];
    if (c < 0 || c >= a.cols()) throw InvalidArgument("pick: index out of range");
    out(r, 0) = a.value()(r, c);
  }
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia, index](Tape& t, int self) {
    const auto& x = t.value(ia);
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) g(r, index[static_cast<std::size_t>(r)]) = t.upstream(self)(r, 0);
    t.accumulate(ia, g);
  });
}

Var softmax_rows(Var a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double mx = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, int self) {
    const auto& s = t.value(self);
    const auto& g = t.upstream(self);
    Eigen::VectorXd dot = g.cwiseProduct(s).rowwise().sum();
    Matrix ga = s.array() * (g.array().colwise() - dot.array());
    t.accumulate(ia, ga);
  });
}

Var log_softmax_rows(Var a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double mx = out.row(r).maxCoeff();
    const double lse = mx + std::log((out.row(r).array() - mx).exp().sum());
    out.row(r).array() -= lse;
  }
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, int self) {
    const auto& ls = t.value(self);
    const auto& g = t.upstream(self);
    Eigen::VectorXd gs = g.rowwise().sum();
    Matrix ga = g.array() - ls.array().exp().colwise() * gs.array();
    t.accumulate(ia, ga);
  });
}

Var layer_norm_rows(Var a, double eps) {
  const auto& x = a.value();
  const auto cols = x.cols();
  Matrix out(x.rows(), cols);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    out.row(r) = (x.row(r).array() - mu) * inv_std(r);
  }
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia, inv_std](Tape& t, int self) {
    const auto& xhat = t.value(self);
    const auto& g = t.upstream(self);
    const double n = static_cast<double>(xhat.cols());
    Matrix ga(xhat.rows(), xhat.cols());
    for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
      const double gm = g.row(r).mean();
      const double gx = g.row(r).dot(xhat.row(r)) / n;
      ga.row(r) = inv_std(r) * (g.row(r).array() - gm - xhat.row(r).array() * gx);
    }
    t.accumulate(ia, ga);
  });
}

Var l2_normalize_rows(Var a) {
  const auto& x = a.value();
  Eigen::VectorXd norms = x.rowwise().norm();
  for (Eigen::Index r = 0; r < norms.size(); ++r) {
    if (!(norms(r) > 0.0)) throw NumericalError("l2_normalize_rows: zero-norm row " + std::to_string(r));
  }
  Matrix out = x.array().colwise() / norms.array();
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia, norms](Tape& t, int self) {
    const auto& y = t.value(self);
    const auto& g = t.upstream(self);
    Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Matrix ga = (g.array() - y.array().colwise() * dot.array()).colwise() / norms.array();
    t.accumulate(ia, ga);
  });
}

Var masked_logsumexp_rows(Var a, const BoolMatrix& mask) {
  const auto& x = a.value();
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) throw InvalidArgument("masked_logsumexp_rows: mask shape");
  Matrix out(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask(r, c)) mx = std::max(mx, x(r, c));
    }
    if (!std::isfinite(mx)) {
      out(r, 0) = -std::numeric_limits<double>::infinity();
      continue;
    }
    double s = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask(r, c)) s += std::exp(x(r, c) - mx);
    }
    out(r, 0) = mx + std::log(s);
  }
  const int ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia, mask](Tape& t, int self) {
    const auto& xv = t.value(ia);
    const auto& lse = t.value(self);
    const auto& g = t.upstream(self);
    Matrix ga = Matrix::Zero(xv.rows(), xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      if (!std::isfinite(lse(r, 0)) || g(r, 0) == 0.0) continue;
      for (Eigen::Index c = 0; c < xv.cols(); ++c) {
        if (mask(r, c)) ga(r, c) = g(r, 0) * std::exp(xv(r, c) - lse(r, 0));
      }
    }
    t.accumulate(ia, ga);
  });
}

}  // namespace mcur::ad
