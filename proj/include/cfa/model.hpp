#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cfa {

// ---------------------------------------------------------------------------
// Model specification
// ---------------------------------------------------------------------------

enum class VarKind { Continuous, Ordinal };

struct Indicator {
  std::string name;
  VarKind kind = VarKind::Continuous;
  int categories = 0;  // meaningful only when kind == Ordinal, >= 2

  bool operator==(const Indicator&) const = default;
};

struct Bounds {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  bool operator==(const Bounds&) const = default;
};

// (factor, indicator) key used for loading-addressed maps.
using LoadingKey = std::pair<std::string, std::string>;

// Declarative factor model. Parsed from text or built programmatically.
// Residual variances and intercepts are free unless an entry appears in the
// corresponding fixed_* map (the text grammar never fixes them; the fields
// exist for programmatic use).
struct ModelSpec {
  std::vector<std::string> factors;     // first-appearance order
  std::vector<Indicator> indicators;    // first-appearance order
  std::vector<LoadingKey> loading_order;  // declaration order

  std::map<LoadingKey, double> fixed_loadings;
  std::map<std::string, double> fixed_factor_variances;
  std::map<LoadingKey, double> fixed_factor_covariances;
  std::map<std::string, double> fixed_residual_variances;
  std::map<std::string, double> fixed_intercepts;

  std::map<LoadingKey, double> loading_starts;
  std::map<LoadingKey, Bounds> loading_bounds;

  bool has_factor(const std::string& name) const;
  bool has_indicator(const std::string& name) const;
  bool has_loading(const LoadingKey& key) const;
  int indicator_index(const std::string& name) const;  // -1 if absent
  int factor_index(const std::string& name) const;     // -1 if absent

  bool operator==(const ModelSpec&) const = default;
};

// Parse failure; `line` is 1-based and also embedded in what().
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

// Grammar, one statement per line, `#` starts a comment:
//   F =~ x1 + x2 + x3
//   fix F.x = v
//   start F.x = v
//   bound F.x lower v
//   bound F.x upper v
//   fixvar F = v
//   ordinal x C
// Names must be declared before any directive references them.
ModelSpec parse_model_text(const std::string& text);

// Inverse of parse_model_text: parse(serialize(spec)) == spec.
std::string serialize_model(const ModelSpec& spec);

// Returns one human-readable diagnostic per violated invariant; empty when
// the spec is well-formed. Never throws.
std::vector<std::string> validate_spec(const ModelSpec& spec);

// ---------------------------------------------------------------------------
// Identification
// ---------------------------------------------------------------------------

// Gives the latent scale a metric. FixedFactorVariance fixes every factor
// variance (at 1 unless the spec's fixvar directive says otherwise) and
// leaves all loadings free. FixedAnchorLoading fixes the anchor loading at 1
// and frees the anchor factor's variance; in a multi-factor model the
// remaining factors fall back to fixed variance 1.
struct IdentificationStrategy {
  enum class Kind { FixedFactorVariance, FixedAnchorLoading };

  Kind kind = Kind::FixedFactorVariance;
  std::string anchor_factor;
  std::string anchor_indicator;

  static IdentificationStrategy fixed_variance();
  static IdentificationStrategy anchor(std::string factor, std::string indicator);
};

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

// Starting-value policy for free loadings. Non-loading starts are role
// defaults (factor variances 1, factor covariances 0, residual variances 0.5
// until rescaled against a sample covariance, intercepts 0).
struct StartPolicy {
  enum class Kind { EngineDefault, UniformLoading, PerLoading };

  Kind kind = Kind::EngineDefault;
  double uniform_value = 0.0;
  std::map<LoadingKey, double> per_loading;

  static StartPolicy engine_default();
  static StartPolicy uniform(double value);
  static StartPolicy per(std::map<LoadingKey, double> starts);
};

enum class ParamRole { Loading, FactorVariance, FactorCovariance, ResidualVariance, Intercept };

struct LayoutEntry {
  ParamRole role = ParamRole::Loading;
  std::string factor;   // Loading/FactorVariance: factor; FactorCovariance: first factor; else empty
  std::string second;   // Loading: indicator; FactorCovariance: second factor; Residual/Intercept: indicator
  double start = 0.0;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  std::optional<double> fixed;   // engaged iff the entry is not free
  bool explicit_start = false;   // start came from a spec directive, not the policy
  int position = -1;             // index into the free ParameterVector, -1 when fixed

  bool is_free() const { return !fixed.has_value(); }
};

// Flattened free-parameter space. Entry order is deterministic: loadings in
// declaration order, factor variances, factor covariances (i < j), residual
// variances, intercepts. Free positions are assigned in that order, so the
// covariance-side parameters occupy positions [0, free_covariance) and free
// intercepts the tail. The fit functions are covariance-only; intercepts are
// carried for bookkeeping and resolved from sample means by callers that
// have raw data.
struct ParameterLayout {
  std::vector<std::string> factor_names;
  std::vector<Indicator> indicators;
  std::vector<LayoutEntry> entries;
  int free_total = 0;
  int free_covariance = 0;

  int indicator_count() const { return static_cast<int>(indicators.size()); }
  int factor_count() const { return static_cast<int>(factor_names.size()); }
  int indicator_index(const std::string& name) const;
  int factor_index(const std::string& name) const;

  // Throws std::invalid_argument when no such entry exists.
  const LayoutEntry& entry(ParamRole role, const std::string& factor,
                           const std::string& second = std::string()) const;

  // Start values of the free entries, in position order.
  Eigen::VectorXd start_vector() const;
};

// Applies the identification strategy and the start policy to produce the
// free-parameter layout. Explicit spec starts override policy starts; starts
// are clipped into the open interval between their bounds; residual and free
// factor variances carry an implicit lower bound of 1e-6.
//
// Throws std::invalid_argument on: invalid spec, unknown anchor, a factor
// with both identification strategies requested (anchor plus a fixvar
// directive), an anchor loading already fixed to a value other than 1, or a
// PerLoading policy missing a free loading.
ParameterLayout build_parameter_layout(const ModelSpec& spec,
                                       const IdentificationStrategy& strategy,
                                       const StartPolicy& policy);

// Floor applied to residual variances and free factor variances.
inline constexpr double kVarianceFloor = 1e-6;

// Moves an out-of-range start value strictly inside (lower, upper), a quarter
// of the box width away from the violated bound (half a unit when the box is
// unbounded on one side). In-range values pass through unchanged.
double clip_into_open_interval(double value, double lower, double upper);

// Full parameter matrices with fixed and free entries resolved.
struct ModelMatrices {
  Eigen::MatrixXd lambda;      // p x m
  Eigen::MatrixXd phi;         // m x m, symmetric
  Eigen::VectorXd theta_diag;  // p
  Eigen::VectorXd tau;         // p
};

// theta holds the free entries in position order. Its length may be either
// free_covariance (intercepts resolve to their layout start) or free_total.
ModelMatrices resolve_matrices(const ParameterLayout& layout, const Eigen::VectorXd& theta);

// Sigma = Lambda Phi Lambda' + diag(theta). Symmetric by construction;
// negating every loading of one factor (and, in multi-factor models, the
// off-diagonal Phi entries touching it) leaves the result unchanged
// element-wise exactly.
Eigen::MatrixXd implied_covariance(const ParameterLayout& layout, const Eigen::VectorXd& theta);

}  // namespace cfa
