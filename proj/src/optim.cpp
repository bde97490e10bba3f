#include "cfa/optim.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cfa {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kActiveEps = 1e-9;

Eigen::VectorXd clamp_box(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                          const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// A coordinate is active when it sits at a bound and the gradient points out
// of the box there.
std::vector<bool> active_set(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                             const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  std::vector<bool> active(x.size(), false);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double tol = kActiveEps * std::max(1.0, std::abs(x[i]));
    if (x[i] <= lo[i] + tol && g[i] > 0.0) active[i] = true;
    if (x[i] >= hi[i] - tol && g[i] < 0.0) active[i] = true;
  }
  return active;
}

}  // namespace

OptimResult minimize_bounded(const Objective& f, const GradientFn& grad,
                             const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper, const OptimOptions& options) {
  const Eigen::Index d = x0.size();
  if (lower.size() != d || upper.size() != d)
    throw std::invalid_argument("bound vectors must match the start vector length");
  for (Eigen::Index i = 0; i < d; ++i)
    if (lower[i] > upper[i]) throw std::invalid_argument("box has lower > upper");

  OptimResult res;
  res.x = clamp_box(x0, lower, upper);
  res.value = f(res.x);
  if (!std::isfinite(res.value))
    throw std::runtime_error("objective is not finite at the start point");
  if (d == 0) {
    res.converged = true;
    return res;
  }

  Eigen::VectorXd g = grad(res.x);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d);
  std::vector<bool> active = active_set(res.x, g, lower, upper);

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    res.iterations = iter;

    Eigen::VectorXd pg = g;
    for (Eigen::Index i = 0; i < d; ++i)
      if (active[i]) pg[i] = 0.0;
    res.gradient_inf_norm = pg.lpNorm<Eigen::Infinity>();
    if (res.gradient_inf_norm <= options.gradient_tolerance) {
      res.converged = true;
      break;
    }

    Eigen::VectorXd dir = -(H * pg);
    for (Eigen::Index i = 0; i < d; ++i)
      if (active[i]) dir[i] = 0.0;
    if (dir.dot(g) >= 0.0) {  // not a descent direction: restart from steepest
      H.setIdentity();
      dir = -pg;
    }

    double alpha = iter == 1 ? std::min(1.0, 1.0 / dir.lpNorm<Eigen::Infinity>()) : 1.0;
    Eigen::VectorXd x_new;
    double f_new = std::numeric_limits<double>::quiet_NaN();
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h) {
      x_new = clamp_box(res.x + alpha * dir, lower, upper);
      double m = g.dot(x_new - res.x);  // directional decrease after projection
      if (m < 0.0) {
        f_new = f(x_new);
        if (std::isfinite(f_new) && f_new <= res.value + kArmijo * m) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // No admissible step along this direction; report the stall.
      res.converged = res.gradient_inf_norm <= options.gradient_tolerance;
      break;
    }

    Eigen::VectorXd s = x_new - res.x;
    Eigen::VectorXd g_new = grad(x_new);
    Eigen::VectorXd y = g_new - g;

    double step_rel = s.lpNorm<Eigen::Infinity>() /
                      std::max(1.0, res.x.lpNorm<Eigen::Infinity>());
    res.x = x_new;
    res.value = f_new;
    g = g_new;

    std::vector<bool> active_new = active_set(res.x, g, lower, upper);
    if (active_new != active) {
      H.setIdentity();  // curvature gathered on the old face no longer applies
    } else {
      double sy = s.dot(y);
      if (sy > 1e-12 * s.norm() * y.norm()) {
        Eigen::VectorXd Hy = H * y;
        double yHy = y.dot(Hy);
        // BFGS inverse update in the two-rank form.
        H += ((sy + yHy) / (sy * sy)) * (s * s.transpose());
        Eigen::MatrixXd cross = Hy * s.transpose();
        H -= (cross + cross.transpose()) / sy;
      }
    }
    active = active_new;

    if (step_rel <= options.step_tolerance) {
      Eigen::VectorXd pg2 = g;
      for (Eigen::Index i = 0; i < d; ++i)
        if (active[i]) pg2[i] = 0.0;
      res.gradient_inf_norm = pg2.lpNorm<Eigen::Infinity>();
      res.converged = true;
      break;
    }
  }

  // Final projected gradient and active-bound report.
  Eigen::VectorXd pg = g;
  std::vector<bool> final_active = active_set(res.x, g, lower, upper);
  for (Eigen::Index i = 0; i < d; ++i)
    if (final_active[i]) pg[i] = 0.0;
  res.gradient_inf_norm = pg.lpNorm<Eigen::Infinity>();
  if (res.gradient_inf_norm <= options.gradient_tolerance) res.converged = true;
  for (Eigen::Index i = 0; i < d; ++i) {
    double tol = kActiveEps * std::max(1.0, std::abs(res.x[i]));
    if (res.x[i] <= lower[i] + tol || res.x[i] >= upper[i] - tol)
      res.active_bounds.push_back(static_cast<int>(i));
  }
  return res;
}

}  // namespace cfa
