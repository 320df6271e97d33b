#include "openviewer/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "openviewer/errors.hpp"

namespace openviewer::ad {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw DimensionError("expected a 1x1 node, got " + shape_str(v));
  }
  return v(0, 0);
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf_scalar(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return leaf(std::move(m));
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw Error("operands belong to a different tape");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs, needs ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw Error("backward root belongs to a different tape");
  if (backward_done_) throw StateError("backward already ran on this tape");
  const Matrix& rv = nodes_[root.id()].value;
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw DimensionError("backward root must be 1x1, got " + shape_str(rv));
  }
  for (Node& n : nodes_) {
    if (n.requires_grad) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  backward_done_ = true;
  if (!nodes_[root.id()].requires_grad) return;
  nodes_[root.id()].grad(0, 0) = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this, i);
  }
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
  }
}

void accumulate(Tape& t, std::size_t id, const Matrix& g) {
  if (t.requires_grad(id)) t.grad_mut(id) += g;
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

Var matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(av) + " * " +
                         shape_str(bv));
  }
  Matrix out = av * bv;
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad_mut(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad_mut(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    accumulate(t, ia, t.grad(self));
    accumulate(t, ib, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    accumulate(t, ia, t.grad(self));
    if (t.requires_grad(ib)) t.grad_mut(ib) -= t.grad(self);
  });
}

Var scale(Var a, double s) {
  const auto ia = a.id();
  return a.tape()->record(a.value() * s, {a}, [ia, s](Tape& t, std::size_t self) {
    t.grad_mut(ia) += s * t.grad(self);
  });
}

Var transpose(Var a) {
  const auto ia = a.id();
  Matrix out = a.value().transpose();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    t.grad_mut(ia) += t.grad(self).transpose();
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "hadamard");
  const auto ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad_mut(ia) += g.cwiseProduct(t.value(ib));
    if (t.requires_grad(ib)) t.grad_mut(ib) += g.cwiseProduct(t.value(ia));
  });
}

Var add_scalar(Var a, double s) {
  const auto ia = a.id();
  Matrix out = a.value().array() + s;
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    t.grad_mut(ia) += t.grad(self);
  });
}

Var relu(Var a) {
  Tape& tape = *a.tape();
  const Matrix& av = a.value();
  Matrix out = av.cwiseMax(0.0);
  for (Eigen::Index i = 0; i < av.size(); ++i) {
    tape.push_pattern(av.data()[i] > 0.0);
    tape.note_margin(std::abs(av.data()[i]));
  }
  const auto ia = a.id();
  return tape.record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& x = t.value(ia);
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_mut(ia);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x.data()[i] > 0.0) ga.data()[i] += g.data()[i];
    }
  });
}

Var square(Var a) {
  const auto ia = a.id();
  Matrix out = a.value().cwiseAbs2();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    t.grad_mut(ia) += 2.0 * t.grad(self).cwiseProduct(t.value(ia));
  });
}

Var soft_threshold(Var a, Var theta) {
  const double th = theta.scalar();
  if (!(th >= 0.0)) throw DomainError("soft_threshold: threshold must be >= 0, got " +
                                      std::to_string(th));
  Tape& tape = *a.tape();
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < av.size(); ++i) {
    const double x = av.data()[i];
    const double mag = std::abs(x) - th;
    const bool active = mag > 0.0;
    out.data()[i] = active ? sign(x) * mag : 0.0;
    tape.push_pattern(active);
    tape.note_margin(std::abs(mag));
  }
  const auto ia = a.id(), it = theta.id();
  return tape.record(std::move(out), {a, theta}, [ia, it](Tape& t, std::size_t self) {
    const Matrix& x = t.value(ia);
    const double th = t.value(it)(0, 0);
    const Matrix& g = t.grad(self);
    const bool need_a = t.requires_grad(ia);
    double dtheta = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double xi = x.data()[i];
      if (std::abs(xi) > th) {
        if (need_a) t.grad_mut(ia).data()[i] += g.data()[i];
        dtheta -= sign(xi) * g.data()[i];
      }
    }
    if (t.requires_grad(it)) t.grad_mut(it)(0, 0) += dtheta;
  });
}

namespace {

// Group g as a strided view: columns when axis == columns.
struct GroupView {
  Eigen::Index count;
  Eigen::Index length;
  bool by_column;

  double& at(Matrix& m, Eigen::Index group, Eigen::Index k) const {
    return by_column ? m(k, group) : m(group, k);
  }
  double at(const Matrix& m, Eigen::Index group, Eigen::Index k) const {
    return by_column ? m(k, group) : m(group, k);
  }
};

GroupView groups_of(const Matrix& m, GroupAxis axis) {
  return axis == GroupAxis::columns ? GroupView{m.cols(), m.rows(), true}
                                    : GroupView{m.rows(), m.cols(), false};
}

}  // namespace

Var group_soft_threshold(Var a, Var rho, GroupAxis axis) {
  const double r = rho.scalar();
  if (!(r >= 0.0)) throw DomainError("group_soft_threshold: rho must be >= 0, got " +
                                     std::to_string(r));
  Tape& tape = *a.tape();
  const Matrix& av = a.value();
  const GroupView gv = groups_of(av, axis);
  Matrix out = Matrix::Zero(av.rows(), av.cols());
  for (Eigen::Index g = 0; g < gv.count; ++g) {
    double sq = 0.0;
    for (Eigen::Index k = 0; k < gv.length; ++k) sq += gv.at(av, g, k) * gv.at(av, g, k);
    const double n = std::sqrt(sq);
    const bool active = n > r;
    tape.push_pattern(active);
    tape.note_margin(std::abs(n - r));
    if (!active) continue;
    if (r == 0.0) {
      for (Eigen::Index k = 0; k < gv.length; ++k) gv.at(out, g, k) = gv.at(av, g, k);
    } else {
      const double f = (n - r) / n;
      for (Eigen::Index k = 0; k < gv.length; ++k) gv.at(out, g, k) = f * gv.at(av, g, k);
    }
  }
  const auto ia = a.id(), ir = rho.id();
  return tape.record(std::move(out), {a, rho}, [ia, ir, axis](Tape& t, std::size_t self) {
    const Matrix& x = t.value(ia);
    const double r = t.value(ir)(0, 0);
    const Matrix& g = t.grad(self);
    const GroupView gv = groups_of(x, axis);
    const bool need_a = t.requires_grad(ia);
    double drho = 0.0;
    for (Eigen::Index grp = 0; grp < gv.count; ++grp) {
      double sq = 0.0, dot = 0.0;
      for (Eigen::Index k = 0; k < gv.length; ++k) {
        const double xv = gv.at(x, grp, k);
        sq += xv * xv;
        dot += xv * gv.at(g, grp, k);
      }
      const double n = std::sqrt(sq);
      if (!(n > r)) continue;
      // d/dx [(1 - r/n) x] = (1 - r/n) I + r x x^T / n^3
      if (need_a) {
        Matrix& ga = t.grad_mut(ia);
        const double f = 1.0 - r / n;
        const double c = r * dot / (n * n * n);
        for (Eigen::Index k = 0; k < gv.length; ++k) {
          gv.at(ga, grp, k) += f * gv.at(g, grp, k) + c * gv.at(x, grp, k);
        }
      }
      drho -= dot / n;
    }
    if (t.requires_grad(ir)) t.grad_mut(ir)(0, 0) += drho;
  });
}

Var row_softmax(Var a) {
  const Matrix& av = a.value();
  Matrix p(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    const double m = av.row(i).maxCoeff();
    p.row(i) = (av.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  const auto ia = a.id();
  return a.tape()->record(std::move(p), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& p = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_mut(ia);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double inner = p.row(i).dot(g.row(i));
      ga.row(i).array() += p.row(i).array() * (g.row(i).array() - inner);
    }
  });
}

Var row_log_softmax(Var a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    const double m = av.row(i).maxCoeff();
    const double lse = m + std::log((av.row(i).array() - m).exp().sum());
    out.row(i) = av.row(i).array() - lse;
  }
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& lp = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_mut(ia);
    for (Eigen::Index i = 0; i < lp.rows(); ++i) {
      const double gs = g.row(i).sum();
      ga.row(i).array() += g.row(i).array() - lp.row(i).array().exp() * gs;
    }
  });
}

Var log(Var a) {
  const Matrix& av = a.value();
  if (av.size() > 0 && !(av.minCoeff() > 0.0)) {
    throw DomainError("log: entries must be > 0 (min entry " + std::to_string(av.minCoeff()) +
                      ")");
  }
  const auto ia = a.id();
  Matrix out = av.array().log();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    t.grad_mut(ia).array() += t.grad(self).array() / t.value(ia).array();
  });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    t.grad_mut(ia).array() += t.grad(self)(0, 0);
  });
}

Var row_l2_norms(Var a) {
  Tape& tape = *a.tape();
  const Matrix& av = a.value();
  Matrix out(av.rows(), 1);
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    out(i, 0) = av.row(i).norm();
    tape.push_pattern(out(i, 0) > 0.0);
    tape.note_margin(out(i, 0));
  }
  const auto ia = a.id();
  return tape.record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& x = t.value(ia);
    const Matrix& n = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_mut(ia);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (n(i, 0) > 0.0) ga.row(i) += (g(i, 0) / n(i, 0)) * x.row(i);
    }
  });
}

Var frobenius_sq(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    t.grad_mut(ia) += (2.0 * t.grad(self)(0, 0)) * t.value(ia);
  });
}

Var select_rows(Var a, std::span<const std::size_t> rows) {
  const Matrix& av = a.value();
  Matrix out(static_cast<Eigen::Index>(rows.size()), av.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= static_cast<std::size_t>(av.rows())) {
      throw DimensionError("select_rows: row " + std::to_string(rows[k]) + " out of range for " +
                           shape_str(av));
    }
    out.row(static_cast<Eigen::Index>(k)) = av.row(static_cast<Eigen::Index>(rows[k]));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, idx = std::move(idx)](Tape& t,
                                                                          std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_mut(ia);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      ga.row(static_cast<Eigen::Index>(idx[k])) += g.row(static_cast<Eigen::Index>(k));
    }
  });
}

// ---------------------------------------------------------------------------

namespace {

struct Evaluation {
  double value;
  std::vector<std::uint8_t> pattern;
};

Evaluation evaluate(const LossBuilder& loss, std::span<const Matrix> params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Matrix& p : params) leaves.push_back(tape.leaf(p));
  const Var out = loss(tape, leaves);
  const double v = out.scalar();
  if (!std::isfinite(v)) throw NumericError("loss evaluated to a non-finite value");
  return {v, tape.kink_pattern()};
}

}  // namespace

double value_and_grad(const LossBuilder& loss, std::span<const Matrix> params,
                      std::vector<Matrix>* grads) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Matrix& p : params) leaves.push_back(tape.leaf(p));
  const Var out = loss(tape, leaves);
  const double v = out.scalar();
  if (!std::isfinite(v)) throw NumericError("loss evaluated to a non-finite value");
  tape.backward(out);
  if (grads != nullptr) {
    grads->clear();
    for (const Var& l : leaves) grads->push_back(l.grad());
  }
  return v;
}

GradCheckReport finite_diff_check(const LossBuilder& loss, std::span<const Matrix> params,
                                  double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw DomainError("finite_diff_check: eps must lie in [1e-7, 1e-3]");
  }
  std::vector<Matrix> analytic;
  value_and_grad(loss, params, &analytic);
  const std::vector<std::uint8_t> base_pattern = evaluate(loss, params).pattern;

  GradCheckReport report;
  report.per_param_max.assign(params.size(), 0.0);
  std::vector<Matrix> work(params.begin(), params.end());
  for (std::size_t p = 0; p < work.size(); ++p) {
    Matrix& m = work[p];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double orig = m.data()[i];
      m.data()[i] = orig + eps;
      const Evaluation plus = evaluate(loss, work);
      m.data()[i] = orig - eps;
      const Evaluation minus = evaluate(loss, work);
      m.data()[i] = orig;
      if (plus.pattern != base_pattern || minus.pattern != base_pattern) {
        ++report.skipped_kink;
        continue;
      }
      const double central = (plus.value - minus.value) / (2.0 * eps);
      const double err =
          std::abs(analytic[p].data()[i] - central) / std::max(1.0, std::abs(central));
      report.per_param_max[p] = std::max(report.per_param_max[p], err);
      report.max_rel_error = std::max(report.max_rel_error, err);
      ++report.checked;
    }
  }
  return report;
}

}  // namespace openviewer::ad
