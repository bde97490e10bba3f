#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "cfa/model.hpp"

namespace cfa {

struct FitOptions {
  StartPolicy start_policy = StartPolicy::engine_default();
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
  double step_tolerance = 1e-10;
};

// Outcome of a covariance-structure fit. free_values holds every free entry
// in layout position order; intercept positions keep their layout starts
// (the discrepancy is covariance-only; callers holding raw data may fill
// intercepts from column means).
struct FitResult {
  ParameterLayout layout;
  Eigen::VectorXd free_values;
  ModelMatrices matrices;       // full parameter set, fixed entries resolved
  double discrepancy = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_inf_norm = 0.0;
  std::vector<int> active_bounds;  // free positions sitting at a bound
  bool zero_loading = false;       // some loading estimate is exactly 0

  // Resolved loading values in spec declaration order (fixed ones included).
  std::vector<double> loadings() const;
  // Parallel to loadings(): whether each loading was free in the fit.
  std::vector<bool> loadings_free() const;
};

// F = ln|Sigma| - ln|S| + tr(S Sigma^-1) - p. Zero iff Sigma = S; grows as
// Sigma departs from S. Throws std::runtime_error when Sigma is not positive
// definite and std::invalid_argument when S is not (a data problem, reported
// distinctly).
double ml_discrepancy(const Eigen::MatrixXd& S, const Eigen::MatrixXd& Sigma);

// Analytic gradient of theta -> ml_discrepancy(S, implied_covariance(layout,
// theta)) over the covariance-side free parameters. This is the optimizer's
// internal gradient.
Eigen::VectorXd ml_discrepancy_gradient(const ParameterLayout& layout,
                                        const Eigen::MatrixXd& S,
                                        const Eigen::VectorXd& theta);

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h. Throws on h <= 0
// or a non-finite function value.
Eigen::VectorXd numerical_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& theta, double h);

// Start vector (all free positions) with the policy applied to loadings and
// residual-variance starts rescaled to 0.5 * diag(S). Explicit spec starts
// (already baked into the layout) win over the policy; every start is
// clipped strictly inside its bounds.
Eigen::VectorXd default_start_values(const ParameterLayout& layout, const StartPolicy& policy,
                                     const Eigen::MatrixXd& S);

// Minimizes the ML discrepancy over the free covariance parameters subject
// to the layout's box bounds. Deterministic in its inputs. A non-PD trial
// Sigma vetoes the step (the line search halves up to 30 times); returned
// converged = false reports non-convergence rather than throwing.
FitResult fit_ml(const ModelSpec& spec, const IdentificationStrategy& strategy,
                 const Eigen::MatrixXd& S, int n, const FitOptions& options);

}  // namespace cfa
