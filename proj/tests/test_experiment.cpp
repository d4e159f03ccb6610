#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "jacspec/error.hpp"
#include "jacspec/experiment.hpp"
#include "jacspec/io.hpp"
#include "oracles.hpp"

using namespace jacspec;
using namespace jacspec::experiment;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("jacspec_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string config_error_field(const json& j) {
  try {
    config_from_json(j).validate();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<none>";
}

ExperimentConfig small_compare() {
  ExperimentConfig c;
  c.mode = Mode::kCompare;
  c.depth = 2;
  c.width = 64;
  c.trials = 3;
  c.phi = "sin:1";
  c.sigma_b2 = 0.1;
  c.grid.points = 2001;
  c.kernel_atoms = 1000;
  c.master_seed = 20240601;
  return c;
}

// Numbers compared to 1e-9 relative, everything else exactly.
void compare_json(const json& got, const json& want, const std::string& path) {
  INFO(path);
  REQUIRE(got.type() == want.type());
  if (want.is_object()) {
    REQUIRE(got.size() == want.size());
    for (auto it = want.begin(); it != want.end(); ++it) {
      REQUIRE(got.contains(it.key()));
      if (it.key() == "wall_time_seconds") continue;
      compare_json(got[it.key()], it.value(), path + "." + it.key());
    }
  } else if (want.is_array()) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) compare_json(got[i], want[i], path + "[" + std::to_string(i) + "]");
  } else if (want.is_number_float()) {
    const double a = got.get<double>(), b = want.get<double>();
    CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)));
  } else {
    CHECK(got == want);
  }
}

}  // namespace

TEST_CASE("config parsing") {
  const json j = json::parse(R"({
    "mode": "theory",
    "network": {"depth": 3, "widths": [128, 128, 128], "sigma_b2": 0.2, "phi": "hardtanh:1.5", "q0": 0.9},
    "run": {"trials": 4, "grid": {"lambda_min": 0, "lambda_max": 3, "points": 601}, "epsilon": 0.01},
    "theory": {"quadrature_order": 101, "kernel_atoms": 500, "bias_convention": "qlql"},
    "output": {"output_dir": "out", "master_seed": 9}
  })");
  const auto c = config_from_json(j);
  CHECK(c.mode == Mode::kTheory);
  CHECK(c.depth == 3);
  CHECK(c.width == 128);
  CHECK(c.sigma_b2 == 0.2);
  CHECK(c.phi == "hardtanh:1.5");
  CHECK(c.q0 == 0.9);
  CHECK(c.trials == 4);
  CHECK(c.grid.lambda_max == 3.0);
  CHECK(c.grid.points == 601);
  CHECK(c.epsilon == 0.01);
  CHECK(c.quadrature_order == 101);
  CHECK(c.convention == freeconv::BiasConvention::kOmitBias);
  CHECK(c.output_dir == "out");
  CHECK(c.master_seed == 9);
  CHECK_NOTHROW(c.validate());

  // Round trip through the resolved form.
  const auto again = config_from_json(config_to_json(c));
  CHECK(config_to_json(again) == config_to_json(c));
  // A written config.json carries a resolved block and must load back.
  json written = config_to_json(c);
  written["resolved"] = {{"q0", 0.5}};
  CHECK(config_to_json(config_from_json(written)) == config_to_json(c));

  SUBCASE("defaults resolve q* and an automatic grid") {
    ExperimentConfig d;
    const auto r = resolve(d);
    CHECK(std::abs(r.q0 - oracle::frozen::kQStarSin1) < 1e-12);
    CHECK(r.grid.lambda_max == doctest::Approx(1.25));  // Sin(1): kernel support max 1
    CHECK(r.epsilon == doctest::Approx(2 * r.grid.spacing()));
  }
  SUBCASE("errors name the field") {
    CHECK(config_error_field(json::parse(R"({"bogus": 1})")) == "bogus");
    CHECK(config_error_field(json::parse(R"({"network": {"depht": 2}})")) == "network.depht");
    CHECK(config_error_field(json::parse(R"({"network": {"widths": [64, 32]}})")) == "network.widths");
    CHECK(config_error_field(json::parse(R"({"mode": "train"})")) == "mode");
    CHECK(config_error_field(json::parse(R"({"network": {"phi": "relu:1"}})")) == "network.phi");
    CHECK(config_error_field(json::parse(R"({"network": {"q0": 0.05, "sigma_b2": 0.1}})")) == "network.q0");
    CHECK(config_error_field(json::parse(R"({"network": {"depth": 0}})")) == "network.depth");
    CHECK(config_error_field(json::parse(R"({"run": {"trials": 0}})")) == "run.trials");
    CHECK(config_error_field(json::parse(R"({"run": {"grid": {"lambda_min": 2, "lambda_max": 1}}})")) ==
          "run.grid.lambda_max");
    CHECK(config_error_field(json::parse(R"({"run": {"epsilon": -1}})")) == "run.epsilon");
    CHECK(config_error_field(json::parse(R"({"theory": {"bias_convention": "x"}})")) == "theory.bias_convention");
    CHECK(config_error_field(json::parse(
              R"({"mode": "sweep", "sweep": {"depth": [1, 2], "gain": [1], "sigma_b2": [0.1]}})")) == "sweep");
    CHECK(config_error_field(json::parse(R"([1, 2])")) == "config");
  }
  SUBCASE("no fixed point is a config error") {
    ExperimentConfig d;
    d.sigma_b2 = 0.0;
    d.phi = "sin:0.9";
    try {
      resolve(d);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.field() == "network.q0");
    }
  }
}

TEST_CASE("run_simulate") {
  SUBCASE("unsaturated HardTanh at depth one") {
    ExperimentConfig c;
    c.mode = Mode::kSimulate;
    c.depth = 1;
    c.width = 4;
    c.trials = 1;
    c.phi = "hardtanh:1.5";
    c.sigma_b2 = 0.0;
    c.q0 = 1e-6;
    const auto sim = run_simulate(c);
    REQUIRE(sim.pooled.size() == 4);
    for (double v : sim.pooled) CHECK(std::abs(v - 2.25) < 1e-10);
  }
  SUBCASE("same seed, same bytes") {
    auto c = small_compare();
    c.mode = Mode::kSimulate;
    const auto a = scratch_dir("sim_a"), b = scratch_dir("sim_b");
    c.output_dir = a.string();
    run_simulate(c);
    c.output_dir = b.string();
    run_simulate(c);
    for (const char* f : {"eigenvalues.csv", "histogram.csv"}) {
      CHECK(fs::exists(a / f));
      CHECK(slurp(a / f) == slurp(b / f));
    }
    CHECK(io::read_column_csv(a / "eigenvalues.csv", "lambda").size() == 64 * 3);
    c.master_seed += 1;
    const auto d = scratch_dir("sim_d");
    c.output_dir = d.string();
    run_simulate(c);
    CHECK(slurp(a / "eigenvalues.csv") != slurp(d / "eigenvalues.csv"));
  }
  SUBCASE("trial seeds are master + index") {
    auto c = small_compare();
    const auto sim = simulate_trials(c, resolve(c));
    REQUIRE(sim.trial_seeds.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(sim.trial_seeds[i] == c.master_seed + i);
  }
  SUBCASE("thread count does not change the result") {
    auto c = small_compare();
    const auto r = resolve(c);
    setenv("JACSPEC_THREADS", "1", 1);
    const auto one = simulate_trials(c, r);
    setenv("JACSPEC_THREADS", "3", 1);
    const auto three = simulate_trials(c, r);
    unsetenv("JACSPEC_THREADS");
    CHECK(one.pooled == three.pooled);
  }
  SUBCASE("Sin(1), n=1024, L=2: pooled mean matches the theory mean") {
    ExperimentConfig c;
    c.depth = 2;
    c.width = 1024;
    c.trials = 20;
    c.master_seed = 77;
    const auto r = resolve(c);
    const auto sim = simulate_trials(c, r);
    std::vector<double> means;
    for (const auto& t : sim.per_trial) {
      double s = 0;
      for (double v : t) s += v;
      means.push_back(s / static_cast<double>(t.size()));
    }
    double mean = 0, var = 0;
    for (double m : means) mean += m;
    mean /= static_cast<double>(means.size());
    for (double m : means) var += (m - mean) * (m - mean);
    var /= static_cast<double>(means.size() - 1);
    const double se = std::sqrt(var / static_cast<double>(means.size()));
    const double theory = oracle::e_cos2(r.q0) * oracle::e_cos2(r.q0);
    INFO("mean ", mean, " theory ", theory, " se ", se);
    CHECK(std::abs(mean - theory) < 3 * se);
  }
}

TEST_CASE("run_theory") {
  SUBCASE("depth one is the smoothed kernel") {
    ExperimentConfig c;
    c.mode = Mode::kTheory;
    c.depth = 1;
    c.grid.points = 1001;
    const auto th = run_theory(c);
    const auto r = resolve(c);
    const auto ref = freeconv::smoothed(th.depth.layer_kernels[0], r.grid, r.epsilon);
    CHECK(measures::ks_distance(th.density, ref) < 1e-12);
  }
  SUBCASE("unsaturated HardTanh is a single lobe at g^{2L}") {
    ExperimentConfig c;
    c.mode = Mode::kTheory;
    c.depth = 3;
    c.phi = "hardtanh:0.9";
    c.sigma_b2 = 0.0;
    c.q0 = 1e-6;
    c.grid.points = 2001;
    const auto th = run_theory(c);
    double at = 0;
    CHECK(th.depth.spectrum.is_point_mass(&at));
    CHECK(at == doctest::Approx(std::pow(0.9, 6)));
    const auto* g = th.density.as_grid();
    REQUIRE(g != nullptr);
    std::size_t peak = 0;
    for (std::size_t i = 0; i < g->values.size(); ++i)
      if (g->values[i] > g->values[peak]) peak = i;
    CHECK(std::abs(g->grid[peak] - std::pow(0.9, 6)) <= resolve(c).grid.spacing());
  }
  SUBCASE("Sin(1), L=2 at q*: density integrates to one and files are written") {
    ExperimentConfig c;
    c.mode = Mode::kTheory;
    const auto dir = scratch_dir("theory");
    c.output_dir = dir.string();
    const auto th = run_theory(c);
    CHECK(std::abs(th.density.cdf(resolve(c).grid.lambda_max) - 1.0) < 1e-3);
    const auto lambda = io::read_column_csv(dir / "density.csv", "lambda");
    const auto rho = io::read_column_csv(dir / "density.csv", "density");
    REQUIRE(lambda.size() == rho.size());
    double mass = 0;
    for (std::size_t i = 1; i < lambda.size(); ++i) mass += 0.5 * (rho[i] + rho[i - 1]) * (lambda[i] - lambda[i - 1]);
    CHECK(std::abs(mass - 1.0) < 1e-3);
    const auto prof = json::parse(slurp(dir / "q_profile.json"));
    CHECK(prof["q"].size() == 3);
    CHECK(io::read_column_csv(dir / "diagnostics.csv", "residual").size() == lambda.size());
    for (double res : io::read_column_csv(dir / "diagnostics.csv", "residual")) CHECK(res <= 1e-10);
    CHECK(fs::exists(dir / "config.json"));
  }
}

TEST_CASE("run_compare") {
  SUBCASE("self-compare gives ks = 0") {
    auto c = small_compare();
    c.self_compare = true;
    const auto rep = run_compare(c);
    CHECK(rep.ks == 0.0);
    CHECK(rep.self_compare);
  }
  SUBCASE("unsaturated HardTanh, n=512, L=3, 10 trials") {
    ExperimentConfig c;
    c.depth = 3;
    c.width = 512;
    c.trials = 10;
    c.phi = "hardtanh:1.1";
    c.sigma_b2 = 0.0;
    c.q0 = 1e-6;
    c.grid.points = 1001;
    const auto rep = run_compare(c);
    CHECK(rep.ks < 0.02);
  }
  SUBCASE("report schema and golden file") {
    auto c = small_compare();
    const auto dir = scratch_dir("compare");
    c.output_dir = dir.string();
    const auto rep = run_compare(c);
    const json j = rep.to_json();
    for (const char* key : {"ks", "moments_empirical", "moments_theory", "isometry_empirical", "isometry_theory",
                            "trials", "n", "L", "wall_time_seconds", "seeds", "conventions", "self_compare"})
      CHECK(j.contains(key));
    CHECK(j["moments_empirical"].size() == 4);
    CHECK(json::parse(slurp(dir / "report.json")) == j);
    for (const char* f : {"eigenvalues.csv", "histogram.csv", "density.csv", "q_profile.json", "diagnostics.csv",
                          "config.json"})
      CHECK(fs::exists(dir / f));

    const fs::path golden = fs::path(JACSPEC_GOLDEN_DIR) / "compare_report.json";
    const char* update = std::getenv("JACSPEC_UPDATE_GOLDEN");
    if (update && *update && std::string(update) != "0") io::write_json(golden, j);
    REQUIRE(fs::exists(golden));
    compare_json(j, json::parse(slurp(golden)), "report");

    // Byte-identical outputs on a rerun, apart from the wall time.
    const auto dir2 = scratch_dir("compare2");
    c.output_dir = dir2.string();
    run_compare(c);
    for (const char* f : {"eigenvalues.csv", "histogram.csv", "density.csv", "q_profile.json", "diagnostics.csv"})
      CHECK(slurp(dir / f) == slurp(dir2 / f));
    auto c1 = json::parse(slurp(dir / "config.json")), c2 = json::parse(slurp(dir2 / "config.json"));
    c1["output"].erase("output_dir");
    c2["output"].erase("output_dir");
    CHECK(c1 == c2);
    auto r1 = json::parse(slurp(dir / "report.json")), r2 = json::parse(slurp(dir2 / "report.json"));
    r1.erase("wall_time_seconds");
    r2.erase("wall_time_seconds");
    CHECK(r1.dump() == r2.dump());
  }
}

TEST_CASE("run_sweep") {
  SUBCASE("isometry point along depth") {
    ExperimentConfig c;
    c.mode = Mode::kSweep;
    c.theory_only = true;
    c.phi = "hardtanh:1";
    c.sigma_b2 = 0.0;
    c.q0 = 1e-6;
    c.grid.points = 401;
    c.sweep = {{"depth", {1, 2, 3, 4}}};
    const auto s = run_sweep(c);
    REQUIRE(s.rows.size() == 4);
    for (const auto& row : s.rows) {
      CHECK(row.isometry_theory.mean_sv == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(!row.report);
    }
    const auto dir = scratch_dir("sweep");
    write_sweep_csv((dir / "sweep.csv").string(), s);
    CHECK(io::read_column_csv(dir / "sweep.csv", "mean_sv_theory") == std::vector<double>(4, 1.0));
  }
  SUBCASE("gain axis moves the lobe to g^4") {
    ExperimentConfig c;
    c.mode = Mode::kSweep;
    c.theory_only = true;
    c.phi = "hardtanh:1";
    c.depth = 2;
    c.sigma_b2 = 0.0;
    c.q0 = 1e-6;
    c.grid.points = 2001;
    c.grid.lambda_max = 1.2;
    c.sweep = {{"gain", {0.5, 1.0}}};
    const auto s = run_sweep(c);
    REQUIRE(s.rows.size() == 2);
    CHECK(s.rows[0].peak_lambda == doctest::Approx(0.0625).epsilon(1e-3));
    CHECK(s.rows[1].peak_lambda == doctest::Approx(1.0).epsilon(1e-3));
  }
  SUBCASE("two axes make a product table with compare columns") {
    ExperimentConfig c;
    c.mode = Mode::kSweep;
    c.width = 32;
    c.trials = 2;
    c.grid.points = 2001;
    c.kernel_atoms = 500;
    c.sweep = {{"depth", {1, 2}}, {"sigma_b2", {0.05, 0.1}}};
    const auto s = run_sweep(c);
    CHECK(s.rows.size() == 4);
    for (const auto& row : s.rows) CHECK(row.report.has_value());
    const auto dir = scratch_dir("sweep2");
    write_sweep_csv((dir / "sweep.csv").string(), s);
    CHECK(io::read_column_csv(dir / "sweep.csv", "ks").size() == 4);
    CHECK(io::read_column_csv(dir / "sweep.csv", "var_sv_theory").size() == 4);
  }
}

TEST_CASE("measure json round trip") {
  for (const auto& mu : {measures::SpectralMeasure::atomic({0.0, 1.5}, {0.25, 0.75}),
                         measures::SpectralMeasure::empirical({0.1, 0.2, 0.9}),
                         measures::SpectralMeasure::grid_density({0.0, 1.0, 2.0}, {0.5, 0.5, 0.0}, 0.25)}) {
    const auto back = io::measure_from_json(io::to_json(mu));
    CHECK(io::to_json(back) == io::to_json(mu));
  }
}
