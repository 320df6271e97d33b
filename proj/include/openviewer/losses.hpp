#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "openviewer/matrix.hpp"
#include "openviewer/tensor.hpp"

namespace openviewer {

struct LossConfig {
  double xi = 5.0;
  double lambda1 = 0.1;
  double lambda2 = 0.1;
  double center_lr = 1.0;

  void validate() const;
};

// One center per known class, in the fused C-dimensional space.
struct CenterState {
  Matrix centers;  // C x C
};

// Mean cross-entropy over the rows plus sum_i max(xi - ||z_i||, 0)^2.
ad::Var known_loss(ad::Var z_known, std::span<const int> labels, double xi);
// -(1/C) sum_i sum_c log P(c | z_i) + sum_i ||z_i||^2.
ad::Var unknown_loss(ad::Var z_pseudo);
// 1/2 sum_i ||z_i - c_{y_i}||^2; centers are constants.
ad::Var center_loss(ad::Var z_known, std::span<const int> labels, const Matrix& centers);

// c_j <- c_j - lr * sum_{i: y_i = j} (c_j - z_i) / (1 + n_j) for classes present.
Matrix update_centers(const Matrix& centers, const Matrix& z_known, std::span<const int> labels,
                      double center_lr);
// Per-class mean of the given rows; classes absent from the rows start at 0.
Matrix init_centers(const Matrix& z_known, std::span<const int> labels, int classes);

struct TotalLoss {
  ad::Var total;
  ad::Var known;
  ad::Var unknown;  // invalid when the batch has no pseudo rows
  ad::Var center;

  double unknown_value() const { return unknown.valid() ? unknown.scalar() : 0.0; }
};

// L_known + lambda1 L_unknown + lambda2 L_center over a batch whose pseudo rows
// are flagged by is_pseudo. Known labels must lie in [0, C).
TotalLoss total_loss(ad::Var z_fused, std::span<const int> labels,
                     std::span<const std::uint8_t> is_pseudo, const Matrix& centers,
                     const LossConfig& config);

// Upper bound on ||dL_total / dZ_fused||_F for the batch, evaluated termwise
// from row norms of softmax outputs, targets, logits and centers.
double gradient_bound(const Matrix& z_fused, std::span<const int> labels,
                      std::span<const std::uint8_t> is_pseudo, const Matrix& centers,
                      const LossConfig& config);

}  // namespace openviewer
