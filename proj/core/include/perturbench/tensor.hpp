#pragma once

#include <Eigen/Core>

namespace perturbench {

/// Row-major dense matrix; token/position rows, feature columns.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

}  // namespace perturbench
