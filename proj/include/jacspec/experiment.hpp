#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "jacspec/free_conv.hpp"
#include "jacspec/network.hpp"

namespace jacspec::experiment {

enum class Mode { kSimulate, kTheory, kCompare, kSweep, kSelftest };

Mode parse_mode(const std::string& s);
const char* to_string(Mode m);

struct GridSpec {
  double lambda_min = 0.0;
  std::optional<double> lambda_max;  // empty: 1.25 × product of kernel support maxima
  std::size_t points = 4001;
};

struct SweepAxis {
  std::string name;  // depth | gain | sigma_b2 | q0
  std::vector<double> values;
};

struct ExperimentConfig {
  Mode mode = Mode::kCompare;

  std::size_t depth = 2;
  std::size_t width = 256;
  double sigma_b2 = 0.1;
  std::string phi = "sin:1";
  std::optional<double> q0;    // empty: the fixed point q*
  std::string input = "constant";  // constant | iid

  std::size_t trials = 10;
  GridSpec grid;
  std::optional<double> epsilon;  // empty: 2 × grid spacing

  std::size_t quadrature_order = 201;
  std::size_t kernel_atoms = 4000;
  freeconv::BiasConvention convention = freeconv::BiasConvention::kIncludeBias;

  std::string output_dir;  // empty: no files written
  std::uint64_t master_seed = 0;
  bool self_compare = false;
  bool theory_only = false;

  std::vector<SweepAxis> sweep;
  std::string selftest_level = "quick";

  /// Throws ConfigError naming the field.
  void validate() const;
};

/// Strict: unknown keys are errors.
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {});
nlohmann::json config_to_json(const ExperimentConfig& c);

/// Everything the run needs that is derived from the config.
struct Resolved {
  net::Nonlinearity phi;
  double q0 = 0.0;
  measures::UniformGrid grid;
  double epsilon = 0.0;
};

Resolved resolve(const ExperimentConfig& c);
nlohmann::json resolved_to_json(const Resolved& r);

/// Worker threads for `tasks` independent jobs; JACSPEC_THREADS caps it.
std::size_t thread_count(std::size_t tasks);

struct SimulationResult {
  std::vector<double> pooled;  // sorted
  std::vector<std::vector<double>> per_trial;
  std::vector<std::uint64_t> trial_seeds;
};

SimulationResult simulate_trials(const ExperimentConfig& c, const Resolved& r);

struct TheoryResult {
  freeconv::DepthSpectrum depth;
  measures::SpectralMeasure density;  // ε-smoothed grid density of depth.spectrum
};

TheoryResult compute_theory(const ExperimentConfig& c, const Resolved& r);

struct ComparisonReport {
  double ks = 0.0;
  std::vector<double> moments_empirical;
  std::vector<double> moments_theory;
  freeconv::IsometryMetrics isometry_empirical;
  freeconv::IsometryMetrics isometry_theory;
  std::size_t trials = 0;
  std::size_t n = 0;
  std::size_t depth = 0;
  double wall_time_seconds = 0.0;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> trial_seeds;
  nlohmann::json conventions;
  bool self_compare = false;

  nlohmann::json to_json() const;
};

// Each run_* writes its files into output_dir when it is set.
SimulationResult run_simulate(const ExperimentConfig& c);
TheoryResult run_theory(const ExperimentConfig& c);
ComparisonReport run_compare(const ExperimentConfig& c);

struct SweepRow {
  std::vector<double> axis_values;
  std::size_t depth = 0;
  double gain = 0.0;
  double sigma_b2 = 0.0;
  double q0 = 0.0;
  std::optional<ComparisonReport> report;  // compare cells
  std::vector<double> moments_theory;
  freeconv::IsometryMetrics isometry_theory;
  double peak_lambda = 0.0;
};

struct SweepResult {
  std::vector<std::string> axes;
  std::vector<SweepRow> rows;
};

SweepResult run_sweep(const ExperimentConfig& c);
void write_sweep_csv(const std::string& path, const SweepResult& s);

}  // namespace jacspec::experiment
