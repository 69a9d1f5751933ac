#pragma once

#include <Eigen/Core>

namespace bwe {

/// Row-major real matrix. Rows are frames, columns are bins or bands.
using Grid = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline bool same_shape(const Grid& a, const Grid& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

} // namespace bwe
