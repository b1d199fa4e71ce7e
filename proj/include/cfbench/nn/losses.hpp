#pragma once

#include "cfbench/core.hpp"

#include <cmath>
#include <span>

namespace cfbench::nn {

/// Column-wise numerically stable softmax.
template <typename Scalar>
Mat<Scalar> softmax(const Mat<Scalar>& logits) {
  Mat<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const Scalar m = logits.col(j).maxCoeff();
    out.col(j) = (logits.col(j).array() - m).exp();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

template <typename Scalar>
Vec<Scalar> softmax(const Vec<Scalar>& logits) {
  const Scalar m = logits.maxCoeff();
  Vec<Scalar> p = (logits.array() - m).exp();
  return p / p.sum();
}

/// Mean softmax cross-entropy over the batch; writes d(loss)/d(logits).
template <typename Scalar>
Scalar softmax_cross_entropy(const Mat<Scalar>& logits, std::span<const int> labels, Mat<Scalar>* d_logits) {
  const Mat<Scalar> p = softmax(logits);
  const Eigen::Index B = logits.cols();
  Scalar loss = 0;
  for (Eigen::Index j = 0; j < B; ++j) {
    const int y = labels[static_cast<std::size_t>(j)];
    if (y < 0 || y >= logits.rows()) throw Error("cross entropy: label out of range");
    loss -= std::log(std::max(p(y, j), std::numeric_limits<Scalar>::min()));
  }
  if (d_logits) {
    *d_logits = p;
    for (Eigen::Index j = 0; j < B; ++j) (*d_logits)(labels[static_cast<std::size_t>(j)], j) -= Scalar(1);
    *d_logits /= static_cast<Scalar>(B);
  }
  return loss / static_cast<Scalar>(B);
}

/// Index of the largest entry; ties resolve to the lowest index.
template <typename Derived>
int argmax(const Eigen::MatrixBase<Derived>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return static_cast<int>(best);
}

}  // namespace cfbench::nn
