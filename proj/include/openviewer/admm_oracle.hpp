#pragma once

// Non-learned alternating solver for
//   sum_v 1/2||X_v - Z_v D_v - E_v||_F^2 + alpha||Z_v||_1
//         + beta/2 ||D_v||_F^2 + gamma ||E_v||_{2,1}
// Z: proximal gradient step with step 1/L_v; D: exact ridge solve; E: group
// shrinkage of the residual. Used as the correctness oracle for the unfolded
// network, as a warm start, and as the interpretable baseline.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "openviewer/matrix.hpp"

namespace openviewer {

struct AdmmConfig {
  double alpha = 0.2;
  double beta = 1.0;
  double gamma = 10.0;
  std::size_t max_iter = 300;
  double tol = 1e-8;  // relative objective change; infinity stops after one iteration
  std::uint64_t seed = 0;
  bool exact_e_prox = false;  // threshold gamma instead of gamma / L_v
  GroupAxis group_axis = GroupAxis::columns;
  int rank = 0;  // C; 0 means "number of classes" where a dataset is at hand

  void validate() const;
};

struct ViewFactors {
  Matrix z;  // N x C
  Matrix d;  // C x D_v
  Matrix e;  // N x D_v
  double lipschitz = 1.0;
};

struct AdmmState {
  std::vector<ViewFactors> views;
  std::vector<double> objective_trace;  // initial value, then one per iteration
  std::size_t iterations = 0;
};

// Snapshot of all views after each iteration (index 0 = initial point).
using AdmmHistory = std::vector<std::vector<ViewFactors>>;

double objective(std::span<const ViewFactors> views, std::span<const Matrix> x,
                 const AdmmConfig& config);

// ||E||_{2,1}: sum of group Euclidean norms.
double l21_norm(const Matrix& e, GroupAxis axis);

// 1.01 * ||D D^T||_2 by power iteration; a zero D yields 1 with a warning.
double lipschitz(const Matrix& d);

Matrix z_step(const ViewFactors& f, const Matrix& x, const AdmmConfig& config);
// Solves (Z^T Z + beta I) D = Z^T (X - E) by Cholesky.
Matrix d_step(const ViewFactors& f, const Matrix& x, const AdmmConfig& config);
Matrix e_step(const ViewFactors& f, const Matrix& x, const AdmmConfig& config);

// Gaussian rows, each normalized to unit length.
Matrix random_dictionary(int rank, int dim, std::uint64_t seed, std::uint64_t stream);

// Z = 0, E = 0, D random per view.
std::vector<ViewFactors> initial_factors(std::span<const Matrix> x, const AdmmConfig& config);

AdmmState solve(std::span<const Matrix> x, const AdmmConfig& config,
                AdmmHistory* history = nullptr);
// Same, starting from the given factors (their Lipschitz constants are recomputed).
AdmmState solve_from(std::vector<ViewFactors> start, std::span<const Matrix> x,
                     const AdmmConfig& config, AdmmHistory* history = nullptr);

// sqrt(sum_v ||X_v - Z_v D_v - E_v||^2) / sqrt(sum_v ||X_v||^2)
double relative_reconstruction_error(std::span<const ViewFactors> views, std::span<const Matrix> x);

// Indices of groups of E whose norm exceeds tol.
std::vector<int> group_support(const Matrix& e, GroupAxis axis, double tol = 1e-10);
// F1 between two index sets; 1 when both are empty.
double support_f1(const std::vector<int>& predicted, const std::vector<int>& truth);

// Proximal operators on plain matrices (shared definitions with tensor ops).
Matrix soft_threshold(const Matrix& a, double theta);
Matrix group_soft_threshold(const Matrix& a, double rho, GroupAxis axis);

}  // namespace openviewer
