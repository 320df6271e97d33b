#pragma once

#include <cstdint>
#include <random>

#include "openviewer/matrix.hpp"

namespace testutil {

inline openviewer::Matrix randn(Eigen::Index r, Eigen::Index c, std::uint64_t seed,
                                double scale = 1.0) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n(0.0, scale);
  openviewer::Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(g);
  return m;
}

inline double max_abs_diff(const openviewer::Matrix& a, const openviewer::Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace testutil
