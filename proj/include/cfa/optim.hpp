#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace cfa {

struct OptimOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;  // on the projected gradient, inf norm
  double step_tolerance = 1e-10;     // relative step size
  int max_halvings = 30;             // line-search backoff budget
};

struct OptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_inf_norm = 0.0;    // projected gradient at x
  std::vector<int> active_bounds;    // coordinates sitting at a bound at x
};

using Objective = std::function<double(const Eigen::VectorXd&)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Minimizes f over the box [lower, upper] by BFGS on the inactive coordinates
// with projection: trial points are clamped into the box and accepted under
// an Armijo decrease test with step halving (up to max_halvings). Coordinates
// pinned at a bound with an outward-pointing gradient are held; the inverse
// Hessian resets when the active set changes. f may return +inf (or NaN) to
// veto a trial point; the line search backs off. Convergence: projected
// gradient inf-norm <= gradient_tolerance, or relative step <= step_tolerance.
//
// Throws std::invalid_argument on box/start dimension mismatch and
// std::runtime_error when f is not finite at the (clamped) start.
OptimResult minimize_bounded(const Objective& f, const GradientFn& grad,
                             const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper, const OptimOptions& options);

}  // namespace cfa
