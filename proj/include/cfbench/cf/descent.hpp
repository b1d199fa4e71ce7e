#pragma once

#include "cfbench/cf/counterfactual.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace cfbench::cf {

/// Smooth part of an objective: returns its value, writes the gradient when
/// `grad` is non-null, and reports whether x is a valid counterfactual.
using SmoothObjective = std::function<double(const Vec<double>& x, Vec<double>* grad, bool* valid)>;

/// minimize f(x) + l1_weight * ||x - center||_1 over the pixel box.
struct ProxProblem {
  SmoothObjective smooth;
  Vec<double> center;
  double l1_weight = 0.0;
  double lower = kPixelMin;
  double upper = kPixelMax;
};

struct DescentTrace {
  Vec<double> x;                       // final iterate
  std::optional<Vec<double>> last_valid;  // most recent accepted valid iterate
  double objective = 0.0;
  double smooth_value = 0.0;
  int steps = 0;
  bool converged = false;
  std::vector<double> history;  // objective after each accepted step, starting with the initial point
};

/// Soft-threshold of (v - center) by t, added back to center and clipped to
/// [lower, upper]. This is the exact proximal map of t*||. - center||_1 plus
/// the box indicator, because the box contains the center.
Vec<double> prox_l1_box(const Vec<double>& v, const Vec<double>& center, double t, double lower, double upper);

DescentTrace proximal_descent(const ProxProblem& problem, const Vec<double>& start, const DescentConfig& cfg);

}  // namespace cfbench::cf
