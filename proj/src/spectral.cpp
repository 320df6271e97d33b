#include "openviewer/spectral.hpp"

#include <cmath>
#include <string>

#include "openviewer/errors.hpp"

namespace openviewer {

PowerIterationResult power_iteration_psd(const Matrix& a, double tol, std::size_t max_iter) {
  if (a.rows() != a.cols()) {
    throw DimensionError("power iteration needs a square matrix, got " + shape_str(a));
  }
  PowerIterationResult res;
  const Eigen::Index n = a.rows();
  if (n == 0) return res;
  const double scale = a.norm();
  res.iterations = 1;
  if (scale == 0.0) {
    res.converged = true;
    return res;
  }
  // Repeated squaring: after k iterations b is proportional to a^(2^k), so a
  // cluster of near-equal leading eigenvalues still separates quickly.
  Matrix b = a / scale;
  double lambda = 0.0;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    res.iterations = it;
    Eigen::Index col = 0;
    b.colwise().squaredNorm().maxCoeff(&col);
    Vector v = b.col(col);
    const double vn = v.norm();
    if (vn == 0.0) break;
    v /= vn;
    const double next = v.dot(a * v);
    if (it > 1 && std::abs(next - lambda) <= tol * std::abs(next)) {
      res.eigenvalue = next;
      res.converged = true;
      return res;
    }
    lambda = next;
    b = b * b;
    const double bn = b.norm();
    if (bn == 0.0) break;
    b /= bn;
  }
  res.eigenvalue = lambda;
  return res;
}

double gram_spectral_norm(const Matrix& d, double tol, std::size_t max_iter) {
  const Matrix gram = d * d.transpose();
  const PowerIterationResult r = power_iteration_psd(gram, tol, max_iter);
  if (!r.converged) {
    throw NumericError("power iteration did not converge after " + std::to_string(max_iter) +
                       " iterations");
  }
  return r.eigenvalue;
}

double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

}  // namespace openviewer
