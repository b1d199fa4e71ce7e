#include "cfbench/cf/descent.hpp"

#include <cmath>

namespace cfbench::cf {

Vec<double> prox_l1_box(const Vec<double>& v, const Vec<double>& center, double t, double lower, double upper) {
  const Vec<double> u = v - center;
  const Vec<double> shrunk = u.array().sign() * (u.array().abs() - t).max(0.0);
  return (center + shrunk).cwiseMax(lower).cwiseMin(upper);
}

DescentTrace proximal_descent(const ProxProblem& problem, const Vec<double>& start, const DescentConfig& cfg) {
  if (cfg.max_steps < 0 || !(cfg.step_size > 0.0) || !(cfg.step_growth >= 1.0))
    throw ConfigError("descent: need max_steps >= 0, step_size > 0, step_growth >= 1");
  if (start.size() != problem.center.size()) throw Error("descent: start and center sizes differ");

  auto objective = [&](const Vec<double>& x, Vec<double>* grad, bool* valid, double* smooth) {
    *smooth = problem.smooth(x, grad, valid);
    return *smooth + problem.l1_weight * (x - problem.center).lpNorm<1>();
  };

  DescentTrace t;
  t.x = start.cwiseMax(problem.lower).cwiseMin(problem.upper);
  Vec<double> g;
  bool valid = false;
  double f = objective(t.x, &g, &valid, &t.smooth_value);
  if (!std::isfinite(f)) throw Error("descent: objective is not finite at the starting point");
  if (valid) t.last_valid = t.x;
  t.history.push_back(f);

  double eta = cfg.step_size;
  Vec<double> g_new;
  for (int step = 0; step < cfg.max_steps; ++step) {
    bool accepted = false;
    Vec<double> x_new;
    bool valid_new = false;
    double f_new = 0.0, smooth_new = 0.0;
    while (eta > 1e-14) {
      x_new = prox_l1_box(t.x - eta * g, problem.center, eta * problem.l1_weight, problem.lower, problem.upper);
      f_new = objective(x_new, &g_new, &valid_new, &smooth_new);
      if (std::isfinite(f_new) && f_new <= f) {
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) {
      t.converged = true;
      break;
    }
    const double move = (x_new - t.x).cwiseAbs().maxCoeff();
    t.x = std::move(x_new);
    g.swap(g_new);
    f = f_new;
    t.smooth_value = smooth_new;
    if (valid_new) t.last_valid = t.x;
    t.history.push_back(f);
    ++t.steps;
    eta *= cfg.step_growth;
    if (move < cfg.tolerance) {
      t.converged = true;
      break;
    }
  }
  t.objective = f;
  return t;
}

}  // namespace cfbench::cf
