#include "cfa/datagen.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "cfa/rng.hpp"

namespace cfa {

void Dataset::apply_kinds(const ModelSpec& spec) {
  for (int j = 0; j < p(); ++j) {
    int idx = spec.indicator_index(variables[j]);
    if (idx < 0) continue;  // extra columns stay continuous
    const Indicator& ind = spec.indicators[idx];
    kinds[j] = ind.kind;
    categories[j] = ind.kind == VarKind::Ordinal ? ind.categories : 0;
    if (ind.kind != VarKind::Ordinal) continue;
    for (int i = 0; i < n(); ++i) {
      double v = values(i, j);
      if (v != std::floor(v) || v < 0.0 || v >= ind.categories)
        throw std::invalid_argument("variable " + variables[j] + ": value " +
                                    std::to_string(v) + " is not an ordinal code in [0, " +
                                    std::to_string(ind.categories - 1) + "]");
    }
  }
}

ThresholdSet ThresholdSet::from_values(std::vector<std::vector<double>> per_variable) {
  ThresholdSet t;
  t.values = std::move(per_variable);
  t.validate();
  return t;
}

void ThresholdSet::validate() const {
  for (std::size_t v = 0; v < values.size(); ++v) {
    const auto& row = values[v];
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (!std::isfinite(row[k]))
        throw std::invalid_argument("thresholds for variable " + std::to_string(v) +
                                    " are not finite");
      if (k > 0 && row[k] <= row[k - 1])
        throw std::invalid_argument("thresholds for variable " + std::to_string(v) +
                                    " are not increasing");
    }
  }
}

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& M) {
  const Eigen::Index p = M.rows();
  if (M.cols() != p) throw std::invalid_argument("matrix is not square");
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("matrix is not symmetric");

  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double d = M(j, j) - L.row(j).head(j).squaredNorm();
    if (d <= 0.0)
      throw std::runtime_error("matrix is not positive definite (leading minor " +
                               std::to_string(j + 1) + ")");
    L(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < p; ++i) {
      double s = M(i, j) - (L.row(i).head(j) * L.row(j).head(j).transpose())(0, 0);
      L(i, j) = s / L(j, j);
    }
  }
  return L;
}

Dataset generate_continuous(const ParameterLayout& layout, const Eigen::VectorXd& theta,
                            int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample size must be >= 1");
  ModelMatrices mm = resolve_matrices(layout, theta);
  Eigen::MatrixXd sigma = implied_covariance(layout, theta);
  Eigen::MatrixXd L = cholesky_factor(sigma);

  const int p = layout.indicator_count();
  Dataset out;
  out.kinds.assign(p, VarKind::Continuous);
  out.categories.assign(p, 0);
  for (const auto& ind : layout.indicators) out.variables.push_back(ind.name);
  out.values.resize(n, p);

  Rng rng(seed);
  Eigen::VectorXd z(p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) z[j] = rng.normal();
    out.values.row(i) = (mm.tau + L * z).transpose();
  }
  return out;
}

Dataset discretize_to_ordinal(const Dataset& data, const ThresholdSet& thresholds) {
  if (thresholds.variable_count() != data.p())
    throw std::invalid_argument("threshold set covers " +
                                std::to_string(thresholds.variable_count()) +
                                " variables, data has " + std::to_string(data.p()));
  thresholds.validate();

  Dataset out = data;
  for (int j = 0; j < data.p(); ++j) {
    const auto& cuts = thresholds.values[j];
    out.kinds[j] = VarKind::Ordinal;
    out.categories[j] = static_cast<int>(cuts.size()) + 1;
    for (int i = 0; i < data.n(); ++i) {
      double x = data.values(i, j);
      int code = 0;
      while (code < static_cast<int>(cuts.size()) && x >= cuts[code]) ++code;
      out.values(i, j) = code;
    }
  }
  return out;
}

Eigen::MatrixXd sample_covariance(const Dataset& data) {
  if (data.n() < 2) throw std::invalid_argument("need at least 2 rows for a covariance");
  Eigen::RowVectorXd mean = data.values.colwise().mean();
  Eigen::MatrixXd centered = data.values.rowwise() - mean;
  Eigen::MatrixXd S = (centered.transpose() * centered) / double(data.n() - 1);
  return 0.5 * (S + S.transpose());
}

Eigen::VectorXd sample_means(const Dataset& data) {
  return data.values.colwise().mean().transpose();
}

}  // namespace cfa
