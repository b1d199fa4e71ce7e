#pragma once

#include "cfbench/core.hpp"

#include <cmath>

namespace cfbench {

/// Squared Euclidean distances between the columns of `a` (d x n) and `b`
/// (d x m), via one GEMM. Rounding can leave tiny negatives, which are
/// clamped; callers that need exact values recompute them with l2_distance.
template <typename DA, typename DB>
Mat<double> squared_distances(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  const Vec<double> na = a.colwise().squaredNorm().transpose();
  const Vec<double> nb = b.colwise().squaredNorm().transpose();
  Mat<double> d = -2.0 * (a.transpose() * b);
  d.colwise() += na;
  d.rowwise() += nb.transpose();
  return d.cwiseMax(0.0);
}

template <typename DA, typename DB>
double l2_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  return (a - b).norm();
}

template <typename DA, typename DB>
double l1_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  return (a - b).template lpNorm<1>();
}

}  // namespace cfbench
