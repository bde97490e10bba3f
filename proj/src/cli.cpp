#include "cfa/cli.hpp"

#include <cstdint>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "cfa/categorical.hpp"
#include "cfa/datagen.hpp"
#include "cfa/estimate.hpp"
#include "cfa/io.hpp"
#include "cfa/model.hpp"
#include "cfa/simulation.hpp"
#include "cfa/stats.hpp"
#include "cfa/version.hpp"

namespace cfa {

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

IdentificationStrategy parse_identify(const std::string& text) {
  if (text == "fixvar") return IdentificationStrategy::fixed_variance();
  if (text.rfind("anchor=", 0) == 0) {
    std::string ref = text.substr(7);
    auto dot = ref.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == ref.size())
      throw std::runtime_error("--identify anchor needs F.x, got '" + ref + "'");
    return IdentificationStrategy::anchor(ref.substr(0, dot), ref.substr(dot + 1));
  }
  throw std::runtime_error("--identify takes fixvar or anchor=F.x, got '" + text + "'");
}

// Population values for gen: free entries at their layout starts, except
// residual variances, which standardize each indicator to unit variance
// (1 - communality) whenever that leaves a positive residual.
Eigen::VectorXd population_theta(const ParameterLayout& layout) {
  Eigen::VectorXd theta = layout.start_vector();
  ModelMatrices mm = resolve_matrices(layout, theta);
  Eigen::MatrixXd common = mm.lambda * mm.phi * mm.lambda.transpose();
  for (const auto& e : layout.entries) {
    if (!e.is_free() || e.role != ParamRole::ResidualVariance) continue;
    double c = common.diagonal()[layout.indicator_index(e.second)];
    theta[e.position] = c < 1.0 - kVarianceFloor ? 1.0 - c : 0.25;
  }
  return theta;
}

// Equal-probability cut points for every ordinal indicator.
ThresholdSet equal_probability_cuts(const ModelSpec& spec) {
  ThresholdSet cuts;
  for (const auto& ind : spec.indicators) {
    if (ind.kind != VarKind::Ordinal)
      throw std::runtime_error("indicator " + ind.name +
                               " is not declared ordinal in the model");
    std::vector<double> v;
    for (int c = 1; c < ind.categories; ++c)
      v.push_back(inverse_normal_cdf(static_cast<double>(c) / ind.categories));
    cuts.values.push_back(std::move(v));
  }
  return cuts;
}

int do_gen(const std::string& model_path, int n, std::uint64_t seed, bool ordinal,
           const std::string& out_path, std::ostream& out) {
  ModelSpec spec = parse_model_text(read_text_file(model_path));
  ParameterLayout layout = build_parameter_layout(
      spec, IdentificationStrategy::fixed_variance(), StartPolicy::engine_default());
  Dataset data = generate_continuous(layout, population_theta(layout), n, seed);
  if (ordinal) data = discretize_to_ordinal(data, equal_probability_cuts(spec));
  if (out_path.empty()) {
    write_dataset_csv(data, out);
  } else {
    write_dataset_csv_file(data, out_path);
  }
  return 0;
}

int do_fit(const std::string& model_path, const std::string& data_path,
           const std::string& identify, double starts, bool starts_given,
           const std::vector<std::string>& per_starts, const std::vector<std::string>& bounds,
           bool categorical, const std::string& summary_path, std::ostream& out,
           std::ostream& err) {
  ModelSpec spec = parse_model_text(read_text_file(model_path));
  IdentificationStrategy strategy = parse_identify(identify);

  for (const auto& token : per_starts) {
    auto eq = token.find('=');
    auto dot = token.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw std::runtime_error("--per-start takes F.x=v, got '" + token + "'");
    LoadingKey key{token.substr(0, dot), token.substr(dot + 1, eq - dot - 1)};
    if (!spec.has_loading(key))
      throw std::runtime_error("--per-start: unknown loading " + key.first + "." + key.second);
    spec.loading_starts[key] = std::stod(token.substr(eq + 1));
  }
  for (const auto& token : bounds) {
    auto dot = token.find('.');
    auto c1 = token.find(':');
    auto c2 = c1 == std::string::npos ? std::string::npos : token.find(':', c1 + 1);
    if (dot == std::string::npos || c1 == std::string::npos || c2 == std::string::npos ||
        dot > c1)
      throw std::runtime_error("--bound takes F.x:lo:hi, got '" + token + "'");
    LoadingKey key{token.substr(0, dot), token.substr(dot + 1, c1 - dot - 1)};
    if (!spec.has_loading(key))
      throw std::runtime_error("--bound: unknown loading " + key.first + "." + key.second);
    auto parse_edge = [&](const std::string& t, double inf_sign) {
      if (t == "inf" || t == "+inf" || t == "-inf")
        return std::copysign(std::numeric_limits<double>::infinity(),
                             t[0] == '-' ? -1.0 : inf_sign);
      return std::stod(t);
    };
    Bounds b;
    b.lower = parse_edge(token.substr(c1 + 1, c2 - c1 - 1), -1.0);
    b.upper = parse_edge(token.substr(c2 + 1), 1.0);
    if (b.lower > b.upper)
      throw std::runtime_error("--bound: lower > upper in '" + token + "'");
    spec.loading_bounds[key] = b;
  }

  FitOptions options;
  if (starts_given) options.start_policy = StartPolicy::uniform(starts);

  Dataset data = read_dataset_csv_file(data_path);
  if (data.p() != static_cast<int>(spec.indicators.size()))
    throw std::runtime_error("data has " + std::to_string(data.p()) +
                             " columns, model declares " +
                             std::to_string(spec.indicators.size()) + " indicators");
  data.apply_kinds(spec);

  FitResult fit;
  if (categorical) {
    PolychoricSummary summary = polychoric_matrix(data, 1);
    if (!summary_path.empty()) {
      std::ofstream file(summary_path, std::ios::binary);
      if (!file) throw std::runtime_error("cannot open " + summary_path + " for writing");
      write_polychoric_summary(summary, file);
    }
    fit = fit_dwls(spec, summary, options, strategy);
  } else {
    fit = fit_ml(spec, strategy, sample_covariance(data), data.n(), options);
  }

  out << "item,estimate\n";
  auto loadings = fit.loadings();
  std::size_t li = 0;
  const bool multi = fit.layout.factor_count() > 1;
  for (const auto& e : fit.layout.entries) {
    if (e.role != ParamRole::Loading) continue;
    out << (multi ? e.factor + "." + e.second : e.second) << ','
        << format_double(loadings[li++]) << '\n';
  }

  err << "discrepancy " << format_double(fit.discrepancy) << "\n";
  err << "converged " << (fit.converged ? "yes" : "no") << " after " << fit.iterations
      << " iterations, projected gradient " << format_double(fit.gradient_inf_norm) << "\n";
  if (!categorical) {
    Eigen::VectorXd means = sample_means(data);
    err << "intercepts (sample means):";
    for (Eigen::Index j = 0; j < means.size(); ++j) err << ' ' << format_double(means[j]);
    err << "\n";
  }
  if (fit.zero_loading)
    err << "note: a loading is exactly zero; its sign counts as positive\n";
  if (!fit.converged) {
    err << "error: estimation did not converge\n";
    return 2;
  }
  return 0;
}

int do_simulate(int condition, const std::string& runs_csv, int reps, int n,
                std::uint64_t seed, const std::string& out_path, bool ordinal, int categories,
                int workers, std::ostream& out) {
  SimulationConfig config;
  config.truth = make_condition(condition);
  config.condition_id = condition;
  config.n = n;
  config.replicates = reps;
  config.base_seed = seed;
  config.ordinal = ordinal;
  config.workers = workers;
  if (ordinal) {
    config.ordinal_design.categories = categories;
    config.ordinal_design.thresholds.clear();
    for (int c = 1; c < categories; ++c)
      config.ordinal_design.thresholds.push_back(
          inverse_normal_cdf(static_cast<double>(c) / categories));
  }

  auto indicators = default_indicator_names(static_cast<int>(config.truth.size()));
  std::stringstream tokens(runs_csv);
  std::string token;
  while (std::getline(tokens, token, ','))
    if (!token.empty())
      config.runs.push_back(parse_run_token(token, config.truth, indicators, "F"));
  if (config.runs.empty()) throw std::runtime_error("--runs lists no run tokens");

  DcrTable table = run_simulation(config);

  {
    std::ofstream file(out_path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open " + out_path + " for writing");
    emit_dcr_table(table, file);
  }
  {
    std::ofstream file(out_path + ".manifest", std::ios::binary);
    if (!file) throw std::runtime_error("cannot open " + out_path + ".manifest for writing");
    write_manifest(table, file);
  }

  for (const auto& run : table.runs) {
    out << run.label << ": converged " << run.converged << "/" << (run.converged + run.non_converged)
        << ", match " << run.match << ", global_flip " << run.global_flip << ", mixed "
        << run.mixed << ", bound_violations " << run.bound_violations << ", dcr";
    for (const auto& rec : run.records) out << ' ' << format_double(rec.dcr);
    out << "\n";
  }
  if (table.data_failures > 0)
    out << "data failures: " << table.data_failures << " replicates excluded\n";
  out << "wrote " << out_path << " and " << out_path << ".manifest\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"confirmatory factor analysis engine and simulation harness"};
  app.set_version_flag("--version", std::string("cfasim engine ") + kEngineVersion +
                                        ", formats v" + kFormatVersion);
  app.require_subcommand(0, 1);

  auto* gen = app.add_subcommand("gen", "generate a dataset CSV from a population model");
  std::string gen_model, gen_out;
  int gen_n = 200;
  std::uint64_t gen_seed = 1;
  bool gen_ordinal = false;
  gen->add_option("--model", gen_model, "model file")->required();
  gen->add_option("--n", gen_n, "rows to draw")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "generator seed")->required();
  gen->add_flag("--ordinal", gen_ordinal,
                "discretize at equal-probability cuts per the model's ordinal declarations");
  gen->add_option("--out", gen_out, "output path (default: stdout)");

  auto* fit = app.add_subcommand("fit", "fit a model to one dataset");
  std::string fit_model, fit_data, fit_identify = "fixvar";
  double fit_starts = 0.0;
  std::vector<std::string> fit_per_starts, fit_bounds;
  std::string fit_summary;
  bool fit_categorical = false;
  fit->add_option("--model", fit_model, "model file")->required();
  fit->add_option("--data", fit_data, "dataset CSV")->required();
  fit->add_option("--identify", fit_identify, "fixvar | anchor=F.x (default fixvar)");
  auto* starts_opt =
      fit->add_option("--starts", fit_starts, "uniform start for every free loading");
  fit->add_option("--per-start", fit_per_starts, "per-loading start F.x=v (repeatable)")
      ->excludes(starts_opt);
  fit->add_option("--bound", fit_bounds, "loading bound F.x:lo:hi, inf allowed (repeatable)");
  auto* categorical_flag =
      fit->add_flag("--categorical", fit_categorical,
                    "threshold + polychoric + diagonally weighted least squares pipeline");
  fit->add_option("--summary-out", fit_summary,
                  "write the threshold/polychoric summary CSV here (needs --categorical)")
      ->needs(categorical_flag);

  auto* sim = app.add_subcommand("simulate", "replicate a condition and write a DCR table");
  int sim_condition = 1, sim_reps = 500, sim_n = 200, sim_categories = 2;
  int sim_workers = static_cast<int>(std::thread::hardware_concurrency());
  std::uint64_t sim_seed = 1;
  std::string sim_runs, sim_out;
  bool sim_ordinal = false;
  sim->add_option("--condition", sim_condition, "population sign pattern 1..4")
      ->required()
      ->check(CLI::Range(1, 4));
  sim->add_option("--runs", sim_runs,
                  "comma-separated run tokens: m1 m2[:v] m3[:v] m4 sol1:F.x sol2:lb0|ub0 "
                  "sol3[:v]")
      ->required();
  sim->add_option("--reps", sim_reps, "replicates")->check(CLI::PositiveNumber);
  sim->add_option("--n", sim_n, "sample size per replicate")->check(CLI::PositiveNumber);
  sim->add_option("--seed", sim_seed, "base seed; replicate r uses base_seed xor r");
  sim->add_option("--out", sim_out, "DCR CSV path")->required();
  sim->add_flag("--ordinal", sim_ordinal, "binary/ordinal pipeline instead of continuous");
  sim->add_option("--categories", sim_categories, "categories when --ordinal (default 2)")
      ->check(CLI::Range(2, 20));
  sim->add_option("--workers", sim_workers, "parallel replicate workers (default: cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed())
      return do_gen(gen_model, gen_n, gen_seed, gen_ordinal, gen_out, out);
    if (fit->parsed())
      return do_fit(fit_model, fit_data, fit_identify, fit_starts,
                    starts_opt->count() > 0, fit_per_starts, fit_bounds, fit_categorical,
                    fit_summary, out, err);
    if (sim->parsed())
      return do_simulate(sim_condition, sim_runs, sim_reps, sim_n, sim_seed, sim_out,
                         sim_ordinal, sim_categories, std::max(1, sim_workers), out);
    err << app.help();
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace cfa
