#pragma once

#include <Eigen/Dense>

#include <limits>
#include <span>
#include <vector>

namespace snftm {

using Real = double;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Covariate and treatment histories are finite integer codes, index k = visit.
using History = std::vector<int>;
using HistoryView = std::span<const int>;

}  // namespace snftm
