#pragma once

#include <cstddef>

#include "openviewer/matrix.hpp"

namespace openviewer {

struct PowerIterationResult {
  double eigenvalue = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Dominant eigenvalue of a symmetric positive semi-definite matrix by power
// iteration on repeated squares (iteration k applies a^(2^k)). Stops when the
// Rayleigh quotient changes by less than tol * |lambda| between iterations.
// Deterministic: no random start vector.
PowerIterationResult power_iteration_psd(const Matrix& a, double tol = 1e-10,
                                         std::size_t max_iter = 1000);

// ||D D^T||_2 (the Lipschitz constant of the smooth data term w.r.t. Z).
// Throws NumericError if power iteration does not converge.
double gram_spectral_norm(const Matrix& d, double tol = 1e-10, std::size_t max_iter = 1000);

// ||A||_2 of a small dense matrix (largest singular value, via SVD).
double spectral_norm(const Matrix& a);

}  // namespace openviewer
