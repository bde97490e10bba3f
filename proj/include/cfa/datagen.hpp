#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "cfa/model.hpp"

namespace cfa {

// Rectangular complete-data sample. Ordinal columns hold integer codes in
// [0, categories-1], stored as doubles for uniform matrix handling.
struct Dataset {
  std::vector<std::string> variables;
  std::vector<VarKind> kinds;      // per variable
  std::vector<int> categories;     // per variable, 0 for continuous
  Eigen::MatrixXd values;          // n x p

  int n() const { return static_cast<int>(values.rows()); }
  int p() const { return static_cast<int>(values.cols()); }

  // Copies kind/category declarations from the spec by variable name and
  // checks ordinal codes are integral and in range. Throws on mismatch.
  void apply_kinds(const ModelSpec& spec);
};

// Finite cut points per variable; category c covers [v_c, v_{c+1}) with
// v_0 = -inf and v_C = +inf, so C categories need C - 1 finite thresholds.
struct ThresholdSet {
  std::vector<std::vector<double>> values;  // per variable, strictly increasing

  static ThresholdSet from_values(std::vector<std::vector<double>> per_variable);

  int variable_count() const { return static_cast<int>(values.size()); }
  int categories(int variable) const {
    return static_cast<int>(values[variable].size()) + 1;
  }

  // Throws std::invalid_argument naming the offending variable when any
  // threshold run is non-increasing or non-finite.
  void validate() const;
};

// Lower-triangular L with L * L^T = M. Throws std::invalid_argument when M
// is not symmetric and std::runtime_error naming the leading minor when M is
// not positive definite.
Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& M);

// n i.i.d. rows from N(tau, Sigma(theta)) under the layout's population
// values. Fully determined by (layout, theta, n, seed).
Dataset generate_continuous(const ParameterLayout& layout, const Eigen::VectorXd& theta,
                            int n, std::uint64_t seed);

// Cuts each continuous column at its thresholds: code c iff v_c <= x < v_{c+1}.
Dataset discretize_to_ordinal(const Dataset& data, const ThresholdSet& thresholds);

// Unbiased (n-1 denominator) covariance matrix. Throws when n < 2.
Eigen::MatrixXd sample_covariance(const Dataset& data);

// Column means.
Eigen::VectorXd sample_means(const Dataset& data);

}  // namespace cfa
