#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>

namespace openviewer {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// Axis along which group norms are taken: each column is a group (default)
// or each row is a group.
enum class GroupAxis { columns, rows };

}  // namespace openviewer
