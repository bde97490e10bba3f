// Compares the serial reference loops (workers = 1) against the OpenMP
// paths on the two parallel kernels: the simulation replicate loop and the
// polychoric pair loop. Outputs must match byte for byte; the exit code is
// nonzero if they do not, so the benchmark doubles as an equivalence check.

#include <chrono>
#include <cstdio>
#include <sstream>
#include <string>
#include <thread>

#include "cfa/categorical.hpp"
#include "cfa/datagen.hpp"
#include "cfa/model.hpp"
#include "cfa/simulation.hpp"

using namespace cfa;

namespace {

double time_call(const std::function<void()>& fn) {
  auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string table_bytes(const DcrTable& table) {
  std::ostringstream out;
  emit_dcr_table(table, out);
  return out.str();
}

std::string summary_bytes(const PolychoricSummary& summary) {
  std::ostringstream out;
  write_polychoric_summary(summary, out);
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  const int threads = std::max(2u, std::thread::hardware_concurrency());
  const int scale = argc > 1 ? std::max(1, std::atoi(argv[1])) : 1;
  bool all_equal = true;

  std::printf("serial reference vs OpenMP, %d worker threads\n\n", threads);
  std::printf("%-28s %10s %10s %8s  %s\n", "kernel", "serial s", "parallel s", "speedup",
              "outputs");

  {
    SimulationConfig config;
    config.truth = make_condition(3);
    config.condition_id = 3;
    config.n = 200;
    config.replicates = 2000 * scale;
    config.base_seed = 20240601;
    auto indicators = default_indicator_names(3);
    for (const char* token : {"m1", "m2", "m3", "m4", "sol1:F.x3", "sol3"})
      config.runs.push_back(parse_run_token(token, config.truth, indicators, "F"));

    std::string serial_out, parallel_out;
    config.workers = 1;
    double serial = time_call([&] { serial_out = table_bytes(run_simulation(config)); });
    config.workers = threads;
    double parallel = time_call([&] { parallel_out = table_bytes(run_simulation(config)); });
    bool equal = serial_out == parallel_out;
    all_equal = all_equal && equal;
    std::printf("%-28s %10.3f %10.3f %7.2fx  %s\n", "simulation replicates", serial, parallel,
                serial / parallel, equal ? "identical" : "DIFFER");
  }

  {
    const int p = 40;
    ModelSpec continuous = parse_model_text(population_model_text(p, false, 2));
    ParameterLayout layout = build_parameter_layout(
        continuous, IdentificationStrategy::fixed_variance(), StartPolicy::engine_default());
    Eigen::VectorXd theta(layout.free_total);
    for (const auto& e : layout.entries) {
      if (!e.is_free()) continue;
      theta[e.position] = e.role == ParamRole::Loading ? 0.7
                          : e.role == ParamRole::ResidualVariance ? 0.51
                                                                  : 0.0;
    }
    Dataset data = generate_continuous(layout, theta, 2000 * scale, 20240602);
    ThresholdSet cuts;
    cuts.values.assign(p, {0.0});
    data = discretize_to_ordinal(data, cuts);

    std::string serial_out, parallel_out;
    double serial = time_call([&] { serial_out = summary_bytes(polychoric_matrix(data, 1)); });
    double parallel =
        time_call([&] { parallel_out = summary_bytes(polychoric_matrix(data, threads)); });
    bool equal = serial_out == parallel_out;
    all_equal = all_equal && equal;
    std::printf("%-28s %10.3f %10.3f %7.2fx  %s\n", "polychoric pairs", serial, parallel,
                serial / parallel, equal ? "identical" : "DIFFER");
  }

  if (!all_equal) {
    std::printf("\nserial and parallel outputs diverged\n");
    return 1;
  }
  return 0;
}
