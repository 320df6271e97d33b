#pragma once

// Tape-based reverse-mode differentiation over dense matrices.
//
// Only the operations needed by the unfolded network and the training losses
// are provided. A Tape is rebuilt for every forward pass; Vars are cheap
// handles (tape pointer + node index) and stay valid as long as the tape.
//
// Non-smooth ops (thresholds, relu, norms at zero) append their activation
// pattern to the tape. finite_diff_check() compares patterns between the base
// point and the perturbed points and skips entries whose perturbation crosses
// a kink.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "openviewer/matrix.hpp"

namespace openviewer::ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  double scalar() const;  // value of a 1x1 node
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A differentiable input.
  Var leaf(Matrix value);
  Var leaf_scalar(double value);
  // An input that never receives a gradient.
  Var constant(Matrix value);

  // Seeds d(root)/d(root) = 1 and runs the recorded closures in reverse.
  // root must be 1x1. May be called once per tape.
  void backward(Var root);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  Matrix& grad_mut(std::size_t id) { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Records a new node produced by an op. parents decide requires_grad.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward);

  // Activation pattern of every non-smooth op evaluated on this tape.
  const std::vector<std::uint8_t>& kink_pattern() const { return pattern_; }
  void push_pattern(bool active) { pattern_.push_back(active ? 1 : 0); }
  // Smallest observed distance from a kink over all non-smooth ops.
  double kink_margin() const { return kink_margin_; }
  void note_margin(double d) {
    if (d < kink_margin_) kink_margin_ = d;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<std::uint8_t> pattern_;
  double kink_margin_ = std::numeric_limits<double>::infinity();
  bool backward_done_ = false;
};

// c = a * b
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var transpose(Var a);
// Elementwise product.
Var hadamard(Var a, Var b);
// a + s elementwise.
Var add_scalar(Var a, double s);
Var relu(Var a);
Var square(Var a);

// sign(a) * max(|a| - theta, 0); theta is a 1x1 node, >= 0.
Var soft_threshold(Var a, Var theta);
// Group shrinkage: each group g (column or row) -> max(||g|| - rho, 0)/||g|| * g.
Var group_soft_threshold(Var a, Var rho, GroupAxis axis = GroupAxis::columns);

Var row_softmax(Var a);
// Max-shifted log(row_softmax(a)).
Var row_log_softmax(Var a);
Var log(Var a);
Var sum(Var a);
// N x 1 column of Euclidean row norms.
Var row_l2_norms(Var a);
Var frobenius_sq(Var a);
// Gathers rows by index (duplicates allowed; gradients scatter-add).
Var select_rows(Var a, std::span<const std::size_t> rows);

// ---------------------------------------------------------------------------
// Finite-difference checking

// Builds a scalar loss on the given tape from leaves holding the parameters.
using LossBuilder = std::function<Var(Tape&, std::span<const Var> params)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<double> per_param_max;  // one entry per parameter matrix
  std::size_t checked = 0;
  std::size_t skipped_kink = 0;
};

// max over entries of |analytic - central| / max(1, |central|).
// eps must lie in [1e-7, 1e-3]. Non-finite loss raises NumericError.
GradCheckReport finite_diff_check(const LossBuilder& loss, std::span<const Matrix> params,
                                  double eps = 1e-5);

// Evaluates the loss and returns (value, gradients) for the given parameters.
double value_and_grad(const LossBuilder& loss, std::span<const Matrix> params,
                      std::vector<Matrix>* grads);

}  // namespace openviewer::ad
