#include "cfa/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cfa/categorical.hpp"
#include "cfa/datagen.hpp"
#include "cfa/io.hpp"
#include "cfa/version.hpp"

namespace cfa {

namespace {

constexpr const char* kFactorName = "F";

struct RunOutcome {
  std::vector<double> loadings;
  std::vector<bool> free;
  bool converged = false;
  bool bound_violation = false;
};

struct ReplicateOutcome {
  std::vector<RunOutcome> runs;
  bool data_failed = false;
  std::string error;
};

// Spec and strategy for one run, resolved against the population model.
struct PreparedRun {
  ModelSpec spec;
  IdentificationStrategy strategy;
  FitOptions options;
};

std::vector<double> truth_vector(const Eigen::VectorXd& truth) {
  return std::vector<double>(truth.data(), truth.data() + truth.size());
}

}  // namespace

std::vector<std::string> default_indicator_names(int p) {
  std::vector<std::string> names;
  names.reserve(p);
  for (int j = 1; j <= p; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

std::string population_model_text(int p, bool ordinal, int categories) {
  std::ostringstream out;
  auto names = default_indicator_names(p);
  out << kFactorName << " =~ ";
  for (int j = 0; j < p; ++j) out << (j ? " + " : "") << names[j];
  out << "\n";
  if (ordinal)
    for (const auto& name : names) out << "ordinal " << name << " " << categories << "\n";
  return out.str();
}

Eigen::VectorXd make_condition(int id) {
  Eigen::VectorXd v(3);
  switch (id) {
    case 1: v << 0.7, 0.7, 0.7; break;
    case 2: v << -0.7, -0.7, -0.7; break;
    case 3: v << -0.7, 0.7, 0.7; break;
    case 4: v << -0.7, -0.7, 0.7; break;
    default:
      throw std::invalid_argument("condition id must be in 1..4, got " + std::to_string(id));
  }
  return v;
}

RunSpec parse_run_token(const std::string& token, const Eigen::VectorXd& truth,
                        const std::vector<std::string>& indicators,
                        const std::string& factor) {
  RunSpec run;
  run.label = token;
  std::string head = token;
  std::string arg;
  if (auto colon = token.find(':'); colon != std::string::npos) {
    head = token.substr(0, colon);
    arg = token.substr(colon + 1);
  }

  auto parse_value = [&](double fallback) {
    if (arg.empty()) return fallback;
    std::size_t used = 0;
    double v = std::stod(arg, &used);
    if (used != arg.size())
      throw std::invalid_argument("bad run value '" + arg + "' in " + token);
    return v;
  };

  if (head == "m1") {
    run.start_policy = StartPolicy::engine_default();
  } else if (head == "m2") {
    run.start_policy = StartPolicy::uniform(parse_value(1.0));
  } else if (head == "m3") {
    run.start_policy = StartPolicy::uniform(parse_value(-1.0));
  } else if (head == "m4") {
    if (indicators.empty()) throw std::invalid_argument("m4 needs at least one indicator");
    run.strategy = IdentificationStrategy::anchor(factor, indicators.front());
  } else if (head == "sol1") {
    auto dot = arg.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == arg.size())
      throw std::invalid_argument("sol1 needs an anchor as F.x, got '" + arg + "'");
    run.strategy = IdentificationStrategy::anchor(arg.substr(0, dot), arg.substr(dot + 1));
  } else if (head == "sol2") {
    if (arg != "lb0" && arg != "ub0")
      throw std::invalid_argument("sol2 takes lb0 or ub0, got '" + arg + "'");
    Bounds b;
    if (arg == "lb0") b.lower = 0.0; else b.upper = 0.0;
    for (const auto& name : indicators) run.bounds[{factor, name}] = b;
  } else if (head == "sol3") {
    double magnitude = std::abs(parse_value(1.0));
    if (static_cast<int>(indicators.size()) != truth.size())
      throw std::invalid_argument("sol3 needs one truth entry per indicator");
    std::map<LoadingKey, double> starts;
    for (std::size_t j = 0; j < indicators.size(); ++j)
      starts[{factor, indicators[j]}] = std::copysign(magnitude, truth[j]);
    run.start_policy = StartPolicy::per(std::move(starts));
  } else {
    throw std::invalid_argument("unknown run token '" + token + "'");
  }
  return run;
}

DcrTable run_simulation(const SimulationConfig& config) {
  const int p = static_cast<int>(config.truth.size());
  if (config.replicates < 1) throw std::invalid_argument("replicates must be >= 1");
  if (p < 1) throw std::invalid_argument("truth vector is empty");
  for (int j = 0; j < p; ++j)
    if (config.truth[j] == 0.0)
      throw std::invalid_argument("truth loading " + std::to_string(j + 1) + " is zero");
  if (config.runs.empty()) throw std::invalid_argument("no runs configured");
  {
    std::set<std::string> labels;
    for (const auto& run : config.runs)
      if (!labels.insert(run.label).second)
        throw std::invalid_argument("duplicate run label '" + run.label + "'");
  }

  Eigen::VectorXd residuals = config.residual_variances;
  if (residuals.size() == 0)
    residuals = Eigen::VectorXd::Ones(p) - config.truth.cwiseProduct(config.truth);
  if (residuals.size() != p) throw std::invalid_argument("residual vector length mismatch");
  for (int j = 0; j < p; ++j)
    if (residuals[j] <= 0.0)
      throw std::invalid_argument("population residual variance must be positive");

  // Population model and its true parameter vector.
  ModelSpec pop_spec = parse_model_text(
      population_model_text(p, config.ordinal, config.ordinal_design.categories));
  ParameterLayout pop_layout = build_parameter_layout(
      pop_spec, IdentificationStrategy::fixed_variance(), StartPolicy::engine_default());
  Eigen::VectorXd theta_true(pop_layout.free_total);
  for (const auto& e : pop_layout.entries) {
    if (!e.is_free()) continue;
    switch (e.role) {
      case ParamRole::Loading:
        theta_true[e.position] = config.truth[pop_layout.indicator_index(e.second)];
        break;
      case ParamRole::ResidualVariance:
        theta_true[e.position] = residuals[pop_layout.indicator_index(e.second)];
        break;
      default:
        theta_true[e.position] = 0.0;
        break;
    }
  }

  ThresholdSet cuts;
  if (config.ordinal) {
    if (static_cast<int>(config.ordinal_design.thresholds.size()) + 1 !=
        config.ordinal_design.categories)
      throw std::invalid_argument("ordinal design needs C - 1 thresholds");
    cuts.values.assign(p, config.ordinal_design.thresholds);
    cuts.validate();
  }

  // Resolve each run against the population model up front so configuration
  // errors surface before any replicate work starts.
  std::vector<PreparedRun> prepared;
  for (const auto& run : config.runs) {
    PreparedRun pr;
    pr.spec = pop_spec;
    for (const auto& [key, bounds] : run.bounds) {
      if (!pr.spec.has_loading(key))
        throw std::invalid_argument("bound override for unknown loading " + key.first + "." +
                                    key.second);
      pr.spec.loading_bounds[key] = bounds;
    }
    pr.strategy = run.strategy;
    pr.options = config.fit_options;
    pr.options.start_policy = run.start_policy;
    build_parameter_layout(pr.spec, pr.strategy, pr.options.start_policy);  // validation
    prepared.push_back(std::move(pr));
  }

  std::vector<ReplicateOutcome> outcomes(config.replicates);
  auto run_replicate = [&](int r) {
    ReplicateOutcome& out = outcomes[r];
    try {
      Dataset data = generate_continuous(pop_layout, theta_true, config.n,
                                         config.base_seed ^ static_cast<std::uint64_t>(r));
      Eigen::MatrixXd S;
      PolychoricSummary summary;
      if (config.ordinal) {
        data = discretize_to_ordinal(data, cuts);
        summary = polychoric_matrix(data, 1);
      } else {
        S = sample_covariance(data);
      }

      out.runs.resize(prepared.size());
      for (std::size_t k = 0; k < prepared.size(); ++k) {
        const PreparedRun& pr = prepared[k];
        FitResult fit = config.ordinal
                            ? fit_dwls(pr.spec, summary, pr.options, pr.strategy)
                            : fit_ml(pr.spec, pr.strategy, S, config.n, pr.options);
        RunOutcome& ro = out.runs[k];
        ro.loadings = fit.loadings();
        ro.free = fit.loadings_free();
        ro.converged = fit.converged;
        int li = 0;
        for (const auto& e : fit.layout.entries) {
          if (e.role != ParamRole::Loading) continue;
          double v = ro.loadings[li++];
          if (v < e.lower || v > e.upper) ro.bound_violation = true;
        }
      }
    } catch (const std::exception& e) {
      out.data_failed = true;
      out.error = e.what();
      out.runs.clear();
    }
  };

  if (config.workers > 1) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(config.workers)
    for (int r = 0; r < config.replicates; ++r) run_replicate(r);
#else
    for (int r = 0; r < config.replicates; ++r) run_replicate(r);
#endif
  } else {
    // Serial reference path: same per-replicate work, one slot per replicate.
    for (int r = 0; r < config.replicates; ++r) run_replicate(r);
  }

  // Serial reduction in replicate order keeps the table independent of the
  // worker count and schedule.
  DcrTable table;
  table.config = config;
  std::vector<double> truth = truth_vector(config.truth);
  for (std::size_t k = 0; k < config.runs.size(); ++k) {
    RunStats stats;
    stats.label = config.runs[k].label;
    std::vector<std::vector<double>> converged_loadings;
    std::vector<bool> free_mask;
    for (int r = 0; r < config.replicates; ++r) {
      const ReplicateOutcome& out = outcomes[r];
      if (out.data_failed) continue;
      const RunOutcome& ro = out.runs[k];
      if (free_mask.empty()) free_mask = ro.free;
      if (ro.bound_violation) ++stats.bound_violations;
      if (!ro.converged) {
        ++stats.non_converged;
        continue;
      }
      ++stats.converged;
      converged_loadings.push_back(ro.loadings);
      switch (classify_flip(ro.loadings, truth, ro.free)) {
        case FlipClass::Match: ++stats.match; break;
        case FlipClass::GlobalFlip: ++stats.global_flip; break;
        case FlipClass::Mixed: ++stats.mixed; break;
      }
    }
    if (converged_loadings.empty())
      throw std::runtime_error("all replicates failed to converge for run '" + stats.label +
                               "'");
    stats.records = dcr(converged_loadings, truth, free_mask);
    table.runs.push_back(std::move(stats));
  }
  for (const auto& out : outcomes)
    if (out.data_failed) ++table.data_failures;
  return table;
}

std::size_t emit_dcr_table(const DcrTable& table, std::ostream& out) {
  if (table.runs.empty()) throw std::invalid_argument("empty table");
  std::ostringstream buf;
  buf << "condition,method,loading,truth,M,N,dcr\n";
  for (const auto& run : table.runs) {
    for (const auto& rec : run.records) {
      buf << table.config.condition_id << ',' << run.label << ',' << rec.loading_index + 1
          << ',' << format_double(rec.truth) << ',' << rec.matches << ',' << rec.total << ','
          << format_double(rec.dcr) << '\n';
    }
  }
  std::string text = buf.str();
  out << text;
  if (!out) throw std::runtime_error("failed writing DCR table");
  return text.size();
}

void write_manifest(const DcrTable& table, std::ostream& out) {
  const SimulationConfig& c = table.config;
  out << "engine_version " << kEngineVersion << "\n";
  out << "format_version " << kFormatVersion << "\n";
  out << "condition " << c.condition_id << "\n";
  out << "truth ";
  for (Eigen::Index j = 0; j < c.truth.size(); ++j)
    out << (j ? "," : "") << format_double(c.truth[j]);
  out << "\n";
  out << "n " << c.n << "\n";
  out << "replicates " << c.replicates << "\n";
  out << "base_seed " << c.base_seed << "\n";
  out << "data " << (c.ordinal ? "ordinal" : "continuous") << "\n";
  if (c.ordinal) {
    out << "categories " << c.ordinal_design.categories << "\n";
    out << "thresholds ";
    for (std::size_t j = 0; j < c.ordinal_design.thresholds.size(); ++j)
      out << (j ? "," : "") << format_double(c.ordinal_design.thresholds[j]);
    out << "\n";
  }
  out << "runs ";
  for (std::size_t k = 0; k < c.runs.size(); ++k) out << (k ? ";" : "") << c.runs[k].label;
  out << "\n";
  if (!out) throw std::runtime_error("failed writing manifest");
}

}  // namespace cfa
