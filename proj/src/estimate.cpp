#include "cfa/estimate.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "cfa/optim.hpp"

namespace cfa {

namespace {

// ln|M| via Cholesky; nullopt when M is not positive definite.
std::optional<double> log_det_pd(const Eigen::MatrixXd& M, Eigen::LLT<Eigen::MatrixXd>* llt) {
  llt->compute(M);
  if (llt->info() != Eigen::Success) return std::nullopt;
  double ld = 0.0;
  for (Eigen::Index i = 0; i < M.rows(); ++i) ld += std::log(llt->matrixLLT()(i, i));
  return 2.0 * ld;
}

}  // namespace

double ml_discrepancy(const Eigen::MatrixXd& S, const Eigen::MatrixXd& Sigma) {
  const Eigen::Index p = S.rows();
  if (S.cols() != p || Sigma.rows() != p || Sigma.cols() != p)
    throw std::invalid_argument("S and Sigma must be square with matching dimension");

  Eigen::LLT<Eigen::MatrixXd> llt_s;
  auto log_det_s = log_det_pd(S, &llt_s);
  if (!log_det_s)
    throw std::invalid_argument("sample covariance is not positive definite");

  Eigen::LLT<Eigen::MatrixXd> llt_sigma;
  auto log_det_sigma = log_det_pd(Sigma, &llt_sigma);
  if (!log_det_sigma)
    throw std::runtime_error("implied covariance is not positive definite");

  double trace = llt_sigma.solve(S).trace();
  return *log_det_sigma - *log_det_s + trace - static_cast<double>(p);
}

Eigen::VectorXd ml_discrepancy_gradient(const ParameterLayout& layout,
                                        const Eigen::MatrixXd& S,
                                        const Eigen::VectorXd& theta) {
  ModelMatrices mm = resolve_matrices(layout, theta);
  Eigen::MatrixXd sigma = implied_covariance(layout, theta);

  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("implied covariance is not positive definite");
  const Eigen::Index p = sigma.rows();
  Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(p, p);
  Eigen::MatrixXd sigma_inv = llt.solve(identity);
  // dF/dtheta_k = <A, dSigma_k> with A = Sigma^-1 (Sigma - S) Sigma^-1.
  Eigen::MatrixXd A = sigma_inv * (sigma - S) * sigma_inv;
  A = 0.5 * (A + A.transpose());

  Eigen::MatrixXd lambda_phi = mm.lambda * mm.phi;  // p x m

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(layout.free_covariance);
  for (const auto& e : layout.entries) {
    if (!e.is_free() || e.role == ParamRole::Intercept) continue;
    double g = 0.0;
    switch (e.role) {
      case ParamRole::Loading: {
        int i = layout.indicator_index(e.second);
        int f = layout.factor_index(e.factor);
        // dSigma = e_i u' + u e_i' with u = (Lambda Phi) column f.
        g = 2.0 * A.row(i).dot(lambda_phi.col(f));
        break;
      }
      case ParamRole::FactorVariance: {
        int f = layout.factor_index(e.factor);
        Eigen::VectorXd l = mm.lambda.col(f);
        g = l.dot(A * l);
        break;
      }
      case ParamRole::FactorCovariance: {
        int a = layout.factor_index(e.factor);
        int b = layout.factor_index(e.second);
        g = 2.0 * mm.lambda.col(a).dot(A * mm.lambda.col(b));
        break;
      }
      case ParamRole::ResidualVariance: {
        int i = layout.indicator_index(e.second);
        g = A(i, i);
        break;
      }
      case ParamRole::Intercept:
        break;
    }
    grad[e.position] = g;
  }
  return grad;
}

Eigen::VectorXd numerical_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& theta, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("step size must be positive");
  Eigen::VectorXd grad(theta.size());
  Eigen::VectorXd x = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    x[i] = theta[i] + h;
    double up = f(x);
    x[i] = theta[i] - h;
    double down = f(x);
    x[i] = theta[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::runtime_error("objective not finite near the evaluation point");
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

Eigen::VectorXd default_start_values(const ParameterLayout& layout, const StartPolicy& policy,
                                     const Eigen::MatrixXd& S) {
  if (S.rows() != layout.indicator_count() || S.cols() != layout.indicator_count())
    throw std::invalid_argument("sample covariance dimension does not match the model");

  Eigen::VectorXd starts(layout.free_total);
  for (const auto& e : layout.entries) {
    if (!e.is_free()) continue;
    double v = e.start;
    if (!e.explicit_start) {
      switch (e.role) {
        case ParamRole::Loading:
          switch (policy.kind) {
            case StartPolicy::Kind::EngineDefault:
              v = 0.5;
              break;
            case StartPolicy::Kind::UniformLoading:
              v = policy.uniform_value;
              break;
            case StartPolicy::Kind::PerLoading: {
              auto it = policy.per_loading.find({e.factor, e.second});
              if (it == policy.per_loading.end())
                throw std::invalid_argument("start policy missing loading " + e.factor + "." +
                                            e.second);
              v = it->second;
              break;
            }
          }
          break;
        case ParamRole::ResidualVariance:
          v = 0.5 * S(layout.indicator_index(e.second), layout.indicator_index(e.second));
          break;
        default:
          break;  // factor variances 1, covariances 0, intercepts 0 from the layout
      }
    }
    starts[e.position] = clip_into_open_interval(v, e.lower, e.upper);
  }
  return starts;
}

FitResult fit_ml(const ModelSpec& spec, const IdentificationStrategy& strategy,
                 const Eigen::MatrixXd& S, int n, const FitOptions& options) {
  if (n < 2) throw std::invalid_argument("sample size must be >= 2");
  if (options.gradient_tolerance <= 0.0 || options.step_tolerance <= 0.0)
    throw std::invalid_argument("tolerances must be positive");

  ParameterLayout layout = build_parameter_layout(spec, strategy, options.start_policy);
  Eigen::VectorXd starts = default_start_values(layout, options.start_policy, S);

  const int d = layout.free_covariance;
  Eigen::VectorXd lower(d), upper(d);
  for (const auto& e : layout.entries) {
    if (!e.is_free() || e.role == ParamRole::Intercept) continue;
    lower[e.position] = e.lower;
    upper[e.position] = e.upper;
  }

  auto objective = [&](const Eigen::VectorXd& theta) {
    try {
      return ml_discrepancy(S, implied_covariance(layout, theta));
    } catch (const std::runtime_error&) {
      return std::numeric_limits<double>::infinity();  // non-PD trial Sigma
    }
  };
  auto gradient = [&](const Eigen::VectorXd& theta) {
    return ml_discrepancy_gradient(layout, S, theta);
  };

  OptimOptions oo;
  oo.max_iterations = options.max_iterations;
  oo.gradient_tolerance = options.gradient_tolerance;
  oo.step_tolerance = options.step_tolerance;
  OptimResult opt = minimize_bounded(objective, gradient, starts.head(d), lower, upper, oo);

  FitResult fit;
  fit.layout = layout;
  fit.free_values = starts;
  fit.free_values.head(d) = opt.x;
  fit.matrices = resolve_matrices(layout, fit.free_values);
  fit.discrepancy = opt.value;
  fit.converged = opt.converged;
  fit.iterations = opt.iterations;
  fit.gradient_inf_norm = opt.gradient_inf_norm;
  fit.active_bounds = opt.active_bounds;
  for (double l : fit.loadings())
    if (l == 0.0) fit.zero_loading = true;
  return fit;
}

std::vector<double> FitResult::loadings() const {
  std::vector<double> out;
  for (const auto& e : layout.entries) {
    if (e.role != ParamRole::Loading) continue;
    out.push_back(e.is_free() ? free_values[e.position] : *e.fixed);
  }
  return out;
}

std::vector<bool> FitResult::loadings_free() const {
  std::vector<bool> out;
  for (const auto& e : layout.entries)
    if (e.role == ParamRole::Loading) out.push_back(e.is_free());
  return out;
}

}  // namespace cfa
