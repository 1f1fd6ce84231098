#pragma once

#include <Eigen/Dense>

namespace fedfc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

}  // namespace fedfc
