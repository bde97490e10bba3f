#include "cfa/categorical.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cfa/io.hpp"
#include "cfa/optim.hpp"
#include "cfa/stats.hpp"

namespace cfa {

namespace {

constexpr double kRhoBound = 1.0 - 1e-6;
constexpr double kIntegrationCut = 8.5;  // phi mass beyond is < 1e-17

double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double fa, double fm, double fb, double whole, double eps,
                        int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m);
  double rm = 0.5 * (m + b);
  double flm = f(lm);
  double frm = f(rm);
  double left = simpson(a, m, fa, flm, fm);
  double right = simpson(m, b, fm, frm, fb);
  double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * eps)
    return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double eps) {
  double m = 0.5 * (a + b);
  double fa = f(a), fm = f(m), fb = f(b);
  return adaptive_simpson(f, a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), eps, 30);
}

// Scalar minimization by Brent's parabolic-plus-golden-section method.
double brent_minimize(const std::function<double(double)>& f, double lo, double hi,
                      double tol) {
  constexpr double kGolden = 0.3819660112501051;
  constexpr int kMaxIter = 200;
  double a = lo, b = hi;
  double x = a + kGolden * (b - a);
  double w = x, v = x;
  double fx = f(x), fw = fx, fv = fx;
  double d = 0.0, e = 0.0;

  for (int iter = 0; iter < kMaxIter; ++iter) {
    double xm = 0.5 * (a + b);
    double tol1 = tol * std::abs(x) + 1e-12;
    double tol2 = 2.0 * tol1;
    if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) break;

    bool golden = true;
    if (std::abs(e) > tol1) {
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      double etemp = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * etemp) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = std::copysign(tol1, xm - x);
        golden = false;
      }
    }
    if (golden) {
      e = (x >= xm) ? a - x : b - x;
      d = kGolden * e;
    }
    double u = (std::abs(d) >= tol1) ? x + d : x + std::copysign(tol1, d);
    double fu = f(u);
    if (fu <= fx) {
      if (u >= x) a = x; else b = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  return x;
}

// Cell bounds for category c given finite thresholds: [v_c, v_{c+1}) with
// infinite sentinels at the ends.
double cell_lo(const std::vector<double>& thr, int c) {
  return c == 0 ? -std::numeric_limits<double>::infinity() : thr[c - 1];
}
double cell_hi(const std::vector<double>& thr, int c) {
  return c == static_cast<int>(thr.size()) ? std::numeric_limits<double>::infinity()
                                           : thr[c];
}

// d Phi2(a, b, rho) / d rho is the bivariate density at (a, b) (Plackett's
// identity); an infinite corner contributes nothing.
double bivariate_normal_density(double a, double b, double rho) {
  if (std::isinf(a) || std::isinf(b)) return 0.0;
  const double q = (1.0 - rho) * (1.0 + rho);
  constexpr double kTwoPi = 6.283185307179586;
  return std::exp(-0.5 * (a * a - 2.0 * rho * a * b + b * b) / q) /
         (kTwoPi * std::sqrt(q));
}

}  // namespace

std::vector<double> estimate_thresholds(const Eigen::VectorXd& column, int C) {
  if (C < 2) throw std::invalid_argument("category count must be >= 2");
  const int n = static_cast<int>(column.size());
  if (n == 0) throw std::invalid_argument("empty column");

  std::vector<long long> counts(C, 0);
  for (int i = 0; i < n; ++i) {
    double v = column[i];
    if (v != std::floor(v) || v < 0.0 || v >= C)
      throw std::invalid_argument("code " + std::to_string(v) + " outside [0, " +
                                  std::to_string(C - 1) + "]");
    ++counts[static_cast<int>(v)];
  }
  for (int c = 0; c < C; ++c)
    if (counts[c] == 0)
      throw std::runtime_error("degenerate category " + std::to_string(c) +
                               ": no observations");

  std::vector<double> thresholds(C - 1);
  long long cum = 0;
  for (int c = 0; c < C - 1; ++c) {
    cum += counts[c];
    thresholds[c] = inverse_normal_cdf(static_cast<double>(cum) / n);
  }
  return thresholds;
}

double bivariate_normal_cdf(double a, double b, double rho) {
  if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("|rho| must be < 1");
  if (a > b) std::swap(a, b);  // symmetric; canonical order keeps it bit-exact
  if (std::isinf(a) && a < 0.0) return 0.0;
  if (std::isinf(b) && b < 0.0) return 0.0;
  if (std::isinf(a) && a > 0.0) return 1.0;  // b >= a is +inf too
  if (std::isinf(b) && b > 0.0) return normal_cdf(a);
  if (rho == 0.0) return normal_cdf(a) * normal_cdf(b);

  const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
  auto integrand = [&](double z) { return normal_pdf(z) * normal_cdf((b - rho * z) / s); };
  const double hi = std::min(a, kIntegrationCut);
  const double lo = -kIntegrationCut;
  if (hi <= lo) return 0.0;
  // Near machine-level accuracy so that complementary cells of a reversed
  // coding, which integrate over different ranges, agree to rounding noise.
  return integrate(integrand, lo, hi, 5e-14);
}

PolychoricEstimate estimate_polychoric(const Eigen::VectorXd& col_i,
                                       const Eigen::VectorXd& col_j,
                                       const std::vector<double>& thr_i,
                                       const std::vector<double>& thr_j) {
  if (col_i.size() != col_j.size())
    throw std::invalid_argument("columns differ in length");
  const int ci = static_cast<int>(thr_i.size()) + 1;
  const int cj = static_cast<int>(thr_j.size()) + 1;

  std::vector<std::vector<long long>> table(ci, std::vector<long long>(cj, 0));
  for (Eigen::Index r = 0; r < col_i.size(); ++r) {
    int a = static_cast<int>(col_i[r]);
    int b = static_cast<int>(col_j[r]);
    if (a < 0 || a >= ci || b < 0 || b >= cj)
      throw std::invalid_argument("code outside the threshold-implied range");
    ++table[a][b];
  }

  // Canonical orientation so that swapping the input columns evaluates the
  // identical floating-point likelihood (bit-exact symmetry).
  std::vector<double> ta = thr_i, tb = thr_j;
  bool swap_axes = false;
  if (tb < ta) {
    swap_axes = true;
  } else if (ta == tb) {  // square table: first differing cell decides
    for (int a = 0; a < ci && !swap_axes; ++a)
      for (int b = 0; b < cj; ++b)
        if (table[a][b] != table[b][a]) {
          swap_axes = table[b][a] > table[a][b];
          a = ci;  // decided; stop both loops
          break;
        }
  }
  if (swap_axes) {
    std::swap(ta, tb);
    std::vector<std::vector<long long>> t(cj, std::vector<long long>(ci, 0));
    for (int a = 0; a < ci; ++a)
      for (int b = 0; b < cj; ++b) t[b][a] = table[a][b];
    table = std::move(t);
  }
  const int ra = static_cast<int>(ta.size()) + 1;
  const int rb = static_cast<int>(tb.size()) + 1;

  int nonempty_rows = 0, nonempty_cols = 0;
  std::vector<long long> col_sums(rb, 0);
  for (int a = 0; a < ra; ++a) {
    long long row = 0;
    for (int b = 0; b < rb; ++b) {
      row += table[a][b];
      col_sums[b] += table[a][b];
    }
    if (row > 0) ++nonempty_rows;
  }
  for (int b = 0; b < rb; ++b)
    if (col_sums[b] > 0) ++nonempty_cols;
  if (nonempty_rows < 2 || nonempty_cols < 2)
    throw std::runtime_error("degenerate contingency table: all mass in one row or column");

  auto neg_loglik = [&](double rho) {
    double ll = 0.0;
    for (int a = 0; a < ra; ++a) {
      for (int b = 0; b < rb; ++b) {
        if (table[a][b] == 0) continue;
        double pr = bivariate_normal_cdf(cell_hi(ta, a), cell_hi(tb, b), rho) -
                    bivariate_normal_cdf(cell_lo(ta, a), cell_hi(tb, b), rho) -
                    bivariate_normal_cdf(cell_hi(ta, a), cell_lo(tb, b), rho) +
                    bivariate_normal_cdf(cell_lo(ta, a), cell_lo(tb, b), rho);
        ll += static_cast<double>(table[a][b]) * std::log(std::max(pr, 1e-300));
      }
    }
    return -ll;
  };

  // d log-likelihood / d rho. Cell derivatives are closed-form densities, so
  // the score crosses zero sharply where the likelihood itself flattens into
  // rounding noise within about 1e-8 of the optimum.
  auto score = [&](double rho) {
    double g = 0.0;
    for (int a = 0; a < ra; ++a) {
      for (int b = 0; b < rb; ++b) {
        if (table[a][b] == 0) continue;
        double pr = bivariate_normal_cdf(cell_hi(ta, a), cell_hi(tb, b), rho) -
                    bivariate_normal_cdf(cell_lo(ta, a), cell_hi(tb, b), rho) -
                    bivariate_normal_cdf(cell_hi(ta, a), cell_lo(tb, b), rho) +
                    bivariate_normal_cdf(cell_lo(ta, a), cell_lo(tb, b), rho);
        double dpr = bivariate_normal_density(cell_hi(ta, a), cell_hi(tb, b), rho) -
                     bivariate_normal_density(cell_lo(ta, a), cell_hi(tb, b), rho) -
                     bivariate_normal_density(cell_hi(ta, a), cell_lo(tb, b), rho) +
                     bivariate_normal_density(cell_lo(ta, a), cell_lo(tb, b), rho);
        g += static_cast<double>(table[a][b]) * dpr / std::max(pr, 1e-300);
      }
    }
    return g;
  };

  PolychoricEstimate est;
  est.rho = brent_minimize(neg_loglik, -kRhoBound, kRhoBound, 1e-8);
  // A monotone likelihood drives Brent to a bound; clamp and flag.
  if (kRhoBound - std::abs(est.rho) < 1e-5) {
    double at_bound = neg_loglik(std::copysign(kRhoBound, est.rho));
    if (at_bound <= neg_loglik(est.rho)) {
      est.rho = std::copysign(kRhoBound, est.rho);
      est.boundary = true;
      return est;
    }
  }
  // Secant polish on the score: Brent localizes the optimum only to the
  // likelihood's value-noise floor, and that stopping error would otherwise
  // feed every downstream residual. No value-based acceptance test here; the
  // iteration either converges near the Brent point or is discarded wholesale.
  double x0 = est.rho;
  double x1 = est.rho + 1e-6;
  double g0 = score(x0);
  double g1 = score(x1);
  for (int iter = 0; iter < 12; ++iter) {
    if (g1 == g0) break;
    double x2 = x1 - g1 * (x1 - x0) / (g1 - g0);
    if (!(x2 > -kRhoBound && x2 < kRhoBound)) break;
    x0 = x1;
    g0 = g1;
    x1 = x2;
    g1 = score(x1);
    if (std::abs(x1 - x0) < 1e-13) break;
  }
  if (std::abs(x1 - x0) < 1e-13 && std::abs(x1 - est.rho) < 1e-5) est.rho = x1;
  return est;
}

PolychoricSummary polychoric_matrix(const Dataset& data, int workers) {
  const int p = data.p();
  PolychoricSummary out;
  out.variables = data.variables;
  out.thresholds.values.resize(p);
  for (int j = 0; j < p; ++j) {
    if (data.kinds[j] != VarKind::Ordinal)
      throw std::invalid_argument("variable " + data.variables[j] + " is not ordinal");
    try {
      out.thresholds.values[j] = estimate_thresholds(data.values.col(j), data.categories[j]);
    } catch (const std::exception& e) {
      throw std::runtime_error("variable " + data.variables[j] + ": " + e.what());
    }
  }

  const int n_pairs = p * (p - 1) / 2;
  std::vector<PolychoricEstimate> estimates(n_pairs);
  std::vector<std::string> failures(n_pairs);
  std::vector<std::pair<int, int>> pairs(n_pairs);
  for (int i = 1, k = 0; i < p; ++i)
    for (int j = 0; j < i; ++j, ++k) pairs[k] = {i, j};

  auto run_pair = [&](int k) {
    auto [i, j] = pairs[k];
    try {
      estimates[k] = estimate_polychoric(data.values.col(i), data.values.col(j),
                                         out.thresholds.values[i], out.thresholds.values[j]);
    } catch (const std::exception& e) {
      failures[k] = "pair (" + data.variables[i] + ", " + data.variables[j] + "): " + e.what();
    }
  };

  if (workers > 1) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (int k = 0; k < n_pairs; ++k) run_pair(k);
#else
    for (int k = 0; k < n_pairs; ++k) run_pair(k);
#endif
  } else {
    // Serial reference loop; identical slot-wise results by construction.
    for (int k = 0; k < n_pairs; ++k) run_pair(k);
  }

  for (const auto& f : failures)
    if (!f.empty()) throw std::runtime_error(f);

  out.correlation = Eigen::MatrixXd::Identity(p, p);
  out.weight_diag = Eigen::VectorXd::Ones(n_pairs);
  for (int k = 0; k < n_pairs; ++k) {
    auto [i, j] = pairs[k];
    out.correlation(i, j) = estimates[k].rho;
    out.correlation(j, i) = estimates[k].rho;
    if (estimates[k].boundary) out.boundary_pairs.push_back(pairs[k]);
  }
  return out;
}

void write_polychoric_summary(const PolychoricSummary& summary, std::ostream& out) {
  const int p = static_cast<int>(summary.correlation.rows());
  auto name = [&](int j) {
    return j < static_cast<int>(summary.variables.size()) ? summary.variables[j]
                                                          : "v" + std::to_string(j + 1);
  };
  out << "kind,row,col,value\n";
  for (int j = 0; j < p; ++j) {
    const auto& thr = summary.thresholds.values[j];
    for (std::size_t c = 0; c < thr.size(); ++c)
      out << "threshold," << name(j) << ',' << c + 1 << ',' << format_double(thr[c]) << '\n';
  }
  for (int i = 1, k = 0; i < p; ++i)
    for (int j = 0; j < i; ++j, ++k) {
      out << "correlation," << name(i) << ',' << name(j) << ','
          << format_double(summary.correlation(i, j)) << '\n';
      out << "weight," << name(i) << ',' << name(j) << ','
          << format_double(summary.weight_diag[k]) << '\n';
    }
  for (const auto& [i, j] : summary.boundary_pairs)
    out << "boundary," << name(i) << ',' << name(j) << ",1\n";
  if (!out) throw std::runtime_error("failed writing polychoric summary");
}

double wls_discrepancy(const Eigen::VectorXd& s, const Eigen::VectorXd& sigma_theta,
                       const Eigen::VectorXd& W_diag) {
  if (s.size() != sigma_theta.size() || s.size() != W_diag.size())
    throw std::invalid_argument("vector lengths differ");
  double total = 0.0;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (!(W_diag[k] > 0.0)) throw std::invalid_argument("non-positive weight");
    double r = s[k] - sigma_theta[k];
    total += r * r / W_diag[k];
  }
  return total;
}

FitResult fit_dwls(const ModelSpec& spec, const PolychoricSummary& summary,
                   const FitOptions& options, const IdentificationStrategy& strategy) {
  const int p = static_cast<int>(spec.indicators.size());
  for (const auto& ind : spec.indicators)
    if (ind.kind != VarKind::Ordinal)
      throw std::invalid_argument("indicator " + ind.name + " is not ordinal");
  if (summary.correlation.rows() != p || summary.correlation.cols() != p)
    throw std::invalid_argument("polychoric matrix dimension does not match the model");
  const int n_pairs = p * (p - 1) / 2;
  if (summary.weight_diag.size() != n_pairs)
    throw std::invalid_argument("weight vector length does not match the pair count");

  // Latent responses are standardized, so residual variances are derived,
  // not free: pin them at 0 and reconstruct from the fitted loadings below.
  ModelSpec working = spec;
  for (const auto& ind : spec.indicators) working.fixed_residual_variances[ind.name] = 0.0;

  ParameterLayout layout = build_parameter_layout(working, strategy, options.start_policy);
  Eigen::VectorXd starts = default_start_values(layout, options.start_policy,
                                                summary.correlation);

  Eigen::VectorXd s(n_pairs);
  for (int i = 1, k = 0; i < p; ++i)
    for (int j = 0; j < i; ++j, ++k) s[k] = summary.correlation(i, j);

  auto implied_offdiag = [&](const Eigen::VectorXd& theta) {
    ModelMatrices mm = resolve_matrices(layout, theta);
    Eigen::MatrixXd common = mm.lambda * mm.phi * mm.lambda.transpose();
    Eigen::VectorXd sigma(n_pairs);
    for (int i = 1, k = 0; i < p; ++i)
      for (int j = 0; j < i; ++j, ++k) sigma[k] = 0.5 * (common(i, j) + common(j, i));
    return sigma;
  };

  auto objective = [&](const Eigen::VectorXd& theta) {
    return wls_discrepancy(s, implied_offdiag(theta), summary.weight_diag);
  };
  auto gradient = [&](const Eigen::VectorXd& theta) {
    ModelMatrices mm = resolve_matrices(layout, theta);
    Eigen::MatrixXd common = mm.lambda * mm.phi * mm.lambda.transpose();
    // G_ij = (sigma_ij - s_ij) / W_ij symmetric with zero diagonal; then
    // dF/dtheta = <G, dSigma> exactly as in the ML gradient.
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(p, p);
    for (int i = 1, k = 0; i < p; ++i)
      for (int j = 0; j < i; ++j, ++k) {
        double g = (0.5 * (common(i, j) + common(j, i)) - s[k]) / summary.weight_diag[k];
        G(i, j) = g;
        G(j, i) = g;
      }
    Eigen::MatrixXd lambda_phi = mm.lambda * mm.phi;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(layout.free_covariance);
    for (const auto& e : layout.entries) {
      if (!e.is_free() || e.position >= layout.free_covariance) continue;
      switch (e.role) {
        case ParamRole::Loading: {
          int i = layout.indicator_index(e.second);
          int f = layout.factor_index(e.factor);
          grad[e.position] = 2.0 * G.row(i).dot(lambda_phi.col(f));
          break;
        }
        case ParamRole::FactorVariance: {
          Eigen::VectorXd l = mm.lambda.col(layout.factor_index(e.factor));
          grad[e.position] = l.dot(G * l);
          break;
        }
        case ParamRole::FactorCovariance: {
          Eigen::VectorXd la = mm.lambda.col(layout.factor_index(e.factor));
          Eigen::VectorXd lb = mm.lambda.col(layout.factor_index(e.second));
          grad[e.position] = 2.0 * la.dot(G * lb);
          break;
        }
        default:
          break;
      }
    }
    return grad;
  };

  const int d = layout.free_covariance;
  Eigen::VectorXd lower(d), upper(d);
  for (const auto& e : layout.entries) {
    if (!e.is_free() || e.position >= d) continue;
    lower[e.position] = e.lower;
    upper[e.position] = e.upper;
  }

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
  Eigen::MatrixXd common =
      fit.matrices.lambda * fit.matrices.phi * fit.matrices.lambda.transpose();
  fit.matrices.theta_diag = Eigen::VectorXd::Ones(p) - common.diagonal();
  fit.discrepancy = opt.value;
  fit.converged = opt.converged;
  fit.iterations = opt.iterations;
  fit.gradient_inf_norm = opt.gradient_inf_norm;
  fit.active_bounds = opt.active_bounds;
  for (double l : fit.loadings())
    if (l == 0.0) fit.zero_loading = true;
  return fit;
}

}  // namespace cfa
