#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cfa/datagen.hpp"
#include "cfa/estimate.hpp"
#include "cfa/model.hpp"

namespace cfa {

// Sample statistics for ordinal fitting: per-variable thresholds, the
// polychoric correlation matrix (unit diagonal), and a diagonal weight over
// the strict lower triangle in row-major pair order (1,0), (2,0), (2,1), ...
// so pair (i, j), i > j, sits at index i*(i-1)/2 + j.
struct PolychoricSummary {
  std::vector<std::string> variables;  // column names, for reporting
  ThresholdSet thresholds;
  Eigen::MatrixXd correlation;
  Eigen::VectorXd weight_diag;
  std::vector<std::pair<int, int>> boundary_pairs;  // pairs clamped at the rho bound
};

// v_c = Phi^-1(cumulative proportion through category c-1), c = 1..C-1.
// Throws std::invalid_argument on C < 2 or codes outside [0, C-1] and
// std::runtime_error when a category is empty (its threshold would be
// infinite).
std::vector<double> estimate_thresholds(const Eigen::VectorXd& column, int C);

// P(Z1 <= a, Z2 <= b) under a standard bivariate normal with correlation
// rho, to near machine accuracy (adaptive Simpson quadrature of the
// conditional form). Symmetric in (a, b) bit-exactly. Throws on |rho| >= 1.
double bivariate_normal_cdf(double a, double b, double rho);

struct PolychoricEstimate {
  double rho = 0.0;
  bool boundary = false;  // estimate clamped at +-(1 - 1e-6)
};

// Two-step polychoric estimate: thresholds held fixed, rho maximizing the
// bivariate-normal contingency likelihood over [-1 + 1e-6, 1 - 1e-6]
// (Brent bracketing, then a secant polish on the analytic score that places
// the root to near machine precision). Invariant under swapping the two
// columns. Throws std::runtime_error when the contingency table is
// degenerate (all mass in one row or one column).
PolychoricEstimate estimate_polychoric(const Eigen::VectorXd& col_i,
                                       const Eigen::VectorXd& col_j,
                                       const std::vector<double>& thr_i,
                                       const std::vector<double>& thr_j);

// Assembles thresholds and all pairwise correlations. workers <= 1 runs the
// serial reference loop; larger counts distribute pairs across OpenMP
// threads (results are written into preassigned slots, so the output is
// identical for every worker count). Throws when any variable is not
// ordinal, is degenerate, or any pair's table is degenerate (pair named).
PolychoricSummary polychoric_matrix(const Dataset& data, int workers = 1);

// Long-format CSV (kind,row,col,value) for inspection: threshold rows per
// variable, then the strict-lower-triangle correlations and weights in pair
// order, then one row per boundary-clamped pair. Byte-stable output.
void write_polychoric_summary(const PolychoricSummary& summary, std::ostream& out);

// Sum of (s_k - sigma_k)^2 / W_k. Throws on length mismatch or a
// non-positive weight.
double wls_discrepancy(const Eigen::VectorXd& s, const Eigen::VectorXd& sigma_theta,
                       const Eigen::VectorXd& W_diag);

// Fits the CFA to the polychoric correlations by (diagonally) weighted least
// squares on the strict lower triangle, with the same start/bound machinery
// as fit_ml. Latent responses have unit variance (delta convention), so
// residual variances are not free parameters: the result reports them as
// 1 - diag(Lambda Phi Lambda') (negative values indicate a Heywood-style
// solution and are returned as-is).
FitResult fit_dwls(const ModelSpec& spec, const PolychoricSummary& summary,
                   const FitOptions& options, const IdentificationStrategy& strategy);

}  // namespace cfa
