#pragma once

#include <Eigen/Core>

namespace tda {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Sample-major storage: row i of a feature or attribution matrix is contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorRef = Eigen::Ref<const Vector>;

using Label = int;

}  // namespace tda
