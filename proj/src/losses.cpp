#include "openviewer/losses.hpp"

#include <cmath>
#include <string>

#include "openviewer/errors.hpp"
#include "openviewer/unfold_net.hpp"

namespace openviewer {

void LossConfig::validate() const {
  if (!(xi >= 0.0)) throw ConfigError("loss: xi must be >= 0");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("loss: lambdas must be >= 0");
  if (!(center_lr >= 0.0 && center_lr <= 1.0)) {
    throw ConfigError("loss: center_lr must lie in [0, 1]");
  }
}

namespace {

void check_labels(std::span<const int> labels, Eigen::Index rows, Eigen::Index classes,
                  const char* op) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    throw DimensionError(std::string(op) + ": " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(rows) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw DomainError(std::string(op) + ": label " + std::to_string(y) + " outside [0, " +
                        std::to_string(classes) + ")");
    }
  }
}

}  // namespace

ad::Var known_loss(ad::Var z_known, std::span<const int> labels, double xi) {
  const Eigen::Index n = z_known.rows(), c = z_known.cols();
  if (n < 1) throw DimensionError("known_loss: empty batch");
  check_labels(labels, n, c, "known_loss");
  ad::Tape& tape = *z_known.tape();
  Matrix onehot = Matrix::Zero(n, c);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, labels[static_cast<std::size_t>(i)]) = 1.0;
  const ad::Var logp = ad::row_log_softmax(z_known);
  const ad::Var ce = ad::scale(ad::sum(ad::hadamard(tape.constant(std::move(onehot)), logp)),
                               -1.0 / static_cast<double>(n));
  const ad::Var gap = ad::relu(ad::add_scalar(ad::scale(ad::row_l2_norms(z_known), -1.0), xi));
  return ad::add(ce, ad::sum(ad::square(gap)));
}

ad::Var unknown_loss(ad::Var z_pseudo) {
  if (z_pseudo.rows() < 1) throw DimensionError("unknown_loss: empty batch");
  const double c = static_cast<double>(z_pseudo.cols());
  const ad::Var ce = ad::scale(ad::sum(ad::row_log_softmax(z_pseudo)), -1.0 / c);
  return ad::add(ce, ad::frobenius_sq(z_pseudo));
}

ad::Var center_loss(ad::Var z_known, std::span<const int> labels, const Matrix& centers) {
  const Eigen::Index n = z_known.rows();
  if (centers.cols() != z_known.cols()) {
    throw DimensionError("center_loss: centers are " + shape_str(centers) + " for logits " +
                         shape_str(z_known.value()));
  }
  check_labels(labels, n, centers.rows(), "center_loss");
  Matrix targets(n, centers.cols());
  for (Eigen::Index i = 0; i < n; ++i) targets.row(i) = centers.row(labels[static_cast<std::size_t>(i)]);
  const ad::Var diff = ad::sub(z_known, z_known.tape()->constant(std::move(targets)));
  return ad::scale(ad::frobenius_sq(diff), 0.5);
}

Matrix update_centers(const Matrix& centers, const Matrix& z_known, std::span<const int> labels,
                      double center_lr) {
  check_labels(labels, z_known.rows(), centers.rows(), "update_centers");
  if (centers.cols() != z_known.cols()) throw DimensionError("update_centers: width mismatch");
  Matrix delta = Matrix::Zero(centers.rows(), centers.cols());
  Vector count = Vector::Zero(centers.rows());
  for (Eigen::Index i = 0; i < z_known.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    delta.row(y) += centers.row(y) - z_known.row(i);
    count(y) += 1.0;
  }
  Matrix out = centers;
  for (Eigen::Index j = 0; j < centers.rows(); ++j) {
    if (count(j) > 0.0) out.row(j) -= center_lr * delta.row(j) / (1.0 + count(j));
  }
  return out;
}

Matrix init_centers(const Matrix& z_known, std::span<const int> labels, int classes) {
  check_labels(labels, z_known.rows(), classes, "init_centers");
  Matrix sum = Matrix::Zero(classes, z_known.cols());
  Vector count = Vector::Zero(classes);
  for (Eigen::Index i = 0; i < z_known.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    sum.row(y) += z_known.row(i);
    count(y) += 1.0;
  }
  for (Eigen::Index j = 0; j < classes; ++j) {
    if (count(j) > 0.0) sum.row(j) /= count(j);
  }
  return sum;
}

namespace {

struct RowPartition {
  std::vector<std::size_t> known, pseudo;
  std::vector<int> known_labels;
};

RowPartition partition(Eigen::Index rows, std::span<const int> labels,
                       std::span<const std::uint8_t> is_pseudo) {
  if (static_cast<Eigen::Index>(labels.size()) != rows ||
      static_cast<Eigen::Index>(is_pseudo.size()) != rows) {
    throw DimensionError("total_loss: labels/is_pseudo length does not match the batch");
  }
  RowPartition p;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (is_pseudo[i]) {
      p.pseudo.push_back(i);
    } else {
      p.known.push_back(i);
      p.known_labels.push_back(labels[i]);
    }
  }
  if (p.known.empty()) throw DomainError("total_loss: batch has no known rows");
  return p;
}

}  // namespace

TotalLoss total_loss(ad::Var z_fused, std::span<const int> labels,
                     std::span<const std::uint8_t> is_pseudo, const Matrix& centers,
                     const LossConfig& config) {
  const RowPartition rows = partition(z_fused.rows(), labels, is_pseudo);
  TotalLoss out;
  const ad::Var zk = ad::select_rows(z_fused, rows.known);
  out.known = known_loss(zk, rows.known_labels, config.xi);
  out.center = center_loss(zk, rows.known_labels, centers);
  out.total = ad::add(out.known, ad::scale(out.center, config.lambda2));
  if (!rows.pseudo.empty()) {
    out.unknown = unknown_loss(ad::select_rows(z_fused, rows.pseudo));
    out.total = ad::add(out.total, ad::scale(out.unknown, config.lambda1));
  }
  return out;
}

double gradient_bound(const Matrix& z_fused, std::span<const int> labels,
                      std::span<const std::uint8_t> is_pseudo, const Matrix& centers,
                      const LossConfig& config) {
  const RowPartition rows = partition(z_fused.rows(), labels, is_pseudo);
  const double c = static_cast<double>(z_fused.cols());
  const double n_o = static_cast<double>(rows.known.size());
  const Matrix p = softmax_rows(z_fused);
  Vector class_count = Vector::Zero(centers.rows());
  for (int y : rows.known_labels) class_count(y) += 1.0;

  double eps = 0.0;
  for (std::size_t k = 0; k < rows.known.size(); ++k) {
    const Eigen::Index i = static_cast<Eigen::Index>(rows.known[k]);
    const int y = rows.known_labels[k];
    const double z_norm = z_fused.row(i).norm();
    eps += (p.row(i).norm() + 1.0) / n_o + 2.0 * z_norm + 2.0 * config.xi;
    eps += config.lambda2 *
           (z_norm + centers.row(y).norm() + config.center_lr / (1.0 + class_count(y)));
  }
  for (std::size_t i : rows.pseudo) {
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    eps += config.lambda1 * (p.row(r).norm() / c + 1.0 / c + 2.0 * z_fused.row(r).norm());
  }
  return eps;
}

}  // namespace openviewer
