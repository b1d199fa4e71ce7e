#pragma once

#include "cfbench/core.hpp"

#include <cmath>

namespace cfbench::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

template <typename Scalar>
class Adam {
 public:
  Adam(Eigen::Index size, AdamConfig cfg = {})
      : cfg_(cfg), m_(Vec<Scalar>::Zero(size)), v_(Vec<Scalar>::Zero(size)) {}

  void step(Vec<Scalar>& params, const Vec<Scalar>& grad) {
    ++t_;
    const Scalar b1 = static_cast<Scalar>(cfg_.beta1), b2 = static_cast<Scalar>(cfg_.beta2);
    m_ = b1 * m_ + (Scalar(1) - b1) * grad;
    v_ = b2 * v_ + (Scalar(1) - b2) * grad.cwiseAbs2();
    const double lr_t = cfg_.learning_rate * std::sqrt(1.0 - std::pow(cfg_.beta2, t_)) / (1.0 - std::pow(cfg_.beta1, t_));
    params.array() -= static_cast<Scalar>(lr_t) * m_.array() / (v_.array().sqrt() + static_cast<Scalar>(cfg_.epsilon));
  }

  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  Vec<Scalar> m_, v_;
  long t_ = 0;
};

}  // namespace cfbench::nn
