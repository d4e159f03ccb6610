// jacspec command-line driver: simulate | theory | compare | sweep | selftest.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "jacspec/error.hpp"
#include "jacspec/experiment.hpp"
#include "jacspec/selftest.hpp"

namespace {

using jacspec::ConfigError;
using jacspec::experiment::ExperimentConfig;
using jacspec::experiment::Mode;
using nlohmann::json;

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kNonConvergence = 3, kSelftestFailed = 4 };

struct Flags {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t trials = 0, n = 0, depth = 0;
  std::string phi, q0, bias, grid, input;
  double sigma_b2 = 0.0, epsilon = 0.0;
  std::vector<std::string> sweep;
  std::string level = "quick";
  std::string corrupt;
  bool print_config = false;
  bool self_compare = false;
  bool theory_only = false;
};

double parse_number(const std::string& s, const std::string& field) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(field, "cannot parse '" + s + "' as a number");
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

ExperimentConfig build_config(Mode mode, const Flags& f, const CLI::App& app) {
  ExperimentConfig c;
  c.mode = mode;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw ConfigError("config", "cannot open '" + f.config_path + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config", std::string("invalid JSON: ") + e.what());
    }
    c = jacspec::experiment::config_from_json(j, c);
    c.mode = mode;
  }
  auto given = [&](const char* name) { return app.count(name) > 0; };
  if (given("--seed")) c.master_seed = f.seed;
  if (given("--out")) c.output_dir = f.out;
  if (given("--trials")) c.trials = f.trials;
  if (given("--n")) c.width = f.n;
  if (given("--depth")) c.depth = f.depth;
  if (given("--phi")) c.phi = f.phi;
  if (given("--sigma-b2")) c.sigma_b2 = f.sigma_b2;
  if (given("--input")) c.input = f.input;
  if (given("--q0")) {
    if (f.q0 == "fixed_point") {
      c.q0.reset();
    } else {
      c.q0 = parse_number(f.q0, "network.q0");
    }
  }
  if (given("--bias-convention")) c.convention = jacspec::freeconv::parse_bias_convention(f.bias);
  if (given("--grid")) {
    const auto parts = split(f.grid, ':');
    if (parts.size() != 3) throw ConfigError("run.grid", "expected min:max:points");
    c.grid.lambda_min = parse_number(parts[0], "run.grid.lambda_min");
    if (parts[1] == "auto") {
      c.grid.lambda_max.reset();
    } else {
      c.grid.lambda_max = parse_number(parts[1], "run.grid.lambda_max");
    }
    const double pts = parse_number(parts[2], "run.grid.points");
    if (pts < 2 || pts != static_cast<double>(static_cast<std::size_t>(pts))) {
      throw ConfigError("run.grid.points", "must be an integer >= 2");
    }
    c.grid.points = static_cast<std::size_t>(pts);
  }
  if (given("--epsilon")) c.epsilon = f.epsilon;
  if (given("--self-compare")) c.self_compare = true;
  if (given("--theory-only")) c.theory_only = true;
  if (given("--level")) c.selftest_level = f.level;
  if (given("--sweep")) {
    c.sweep.clear();
    for (const auto& spec : f.sweep) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) throw ConfigError("sweep", "expected axis=v1,v2,... in '" + spec + "'");
      jacspec::experiment::SweepAxis axis{spec.substr(0, eq), {}};
      for (const auto& v : split(spec.substr(eq + 1), ',')) axis.values.push_back(parse_number(v, "sweep." + axis.name));
      c.sweep.push_back(std::move(axis));
    }
  }
  c.validate();
  return c;
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

int run(Mode mode, const Flags& f, const CLI::App& app) {
  namespace ex = jacspec::experiment;
  const auto c = build_config(mode, f, app);
  if (f.print_config) {
    json j = ex::config_to_json(c);
    if (mode != Mode::kSelftest) j["resolved"] = ex::resolved_to_json(ex::resolve(c));
    print_json(j);
    return kOk;
  }
  switch (mode) {
    case Mode::kSimulate: {
      const auto sim = ex::run_simulate(c);
      json summary = {{"eigenvalues", sim.pooled.size()}, {"trials", c.trials}, {"n", c.width}, {"L", c.depth}};
      if (!sim.pooled.empty()) {
        double mean = 0.0;
        for (const double x : sim.pooled) mean += x;
        summary["mean_eigenvalue"] = mean / static_cast<double>(sim.pooled.size());
      }
      print_json(summary);
      return kOk;
    }
    case Mode::kTheory: {
      const auto t = ex::run_theory(c);
      json moments = json::array();
      for (int k = 1; k <= 4; ++k) moments.push_back(jacspec::measures::moment(t.depth.spectrum, k));
      const auto iso = jacspec::freeconv::isometry_metrics(t.depth.spectrum);
      print_json({{"q_profile", t.depth.profile.values},
                  {"moments_theory", moments},
                  {"isometry_theory", {{"mean_sv", iso.mean_sv}, {"var_sv", iso.var_sv}, {"mass_within", iso.mass_within}}}});
      return kOk;
    }
    case Mode::kCompare: {
      const auto rep = ex::run_compare(c);
      print_json(rep.to_json());
      return kOk;
    }
    case Mode::kSweep: {
      const auto s = ex::run_sweep(c);
      if (c.output_dir.empty()) {
        ex::write_sweep_csv("/dev/stdout", s);
      } else {
        std::cout << "wrote " << s.rows.size() << " rows to " << c.output_dir << "/sweep.csv\n";
      }
      return kOk;
    }
    case Mode::kSelftest: {
      jacspec::selftest::Hooks hooks;
      if (f.corrupt == "qr_sign_fix") {
        hooks.corrupt_qr_sign_fix = true;
      } else if (f.corrupt == "root_choice") {
        hooks.corrupt_root_choice = true;
      } else if (!f.corrupt.empty()) {
        throw ConfigError("corrupt", "expected qr_sign_fix or root_choice");
      }
      const auto summary = jacspec::selftest::run_selftest(c.selftest_level, hooks);
      for (const auto& r : summary.checks) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.module << '/' << r.id << "  observed: " << r.observed
                  << "  expected: " << r.expected << "  (" << r.seconds << " s)\n";
      }
      std::cout << (summary.all_passed() ? "selftest passed\n" : "selftest FAILED\n");
      return summary.all_passed() ? kOk : kSelftestFailed;
    }
  }
  return kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Jacobian spectra of deep networks with Haar orthogonal weights: simulation and free-probability theory"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config_path, "JSON config file; flags override its fields");
  app.add_option("--seed", f.seed, "master seed (trial i uses seed + i)");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--trials", f.trials, "independent Monte Carlo trials");
  app.add_option("--n", f.n, "width n");
  app.add_option("--depth", f.depth, "depth L");
  app.add_option("--phi", f.phi, "nonlinearity: hardtanh:<g> | sin:<g> | erf:<g>");
  app.add_option("--sigma-b2", f.sigma_b2, "bias variance");
  app.add_option("--q0", f.q0, "input scale q0, or fixed_point");
  app.add_option("--input", f.input, "input vector: constant | iid");
  app.add_option("--bias-convention", f.bias, "ql (default) | qlql");
  app.add_option("--grid", f.grid, "lambda grid min:max:points (max may be 'auto')");
  app.add_option("--epsilon", f.epsilon, "distance above the real axis for inversion (default 2 x spacing)");
  app.add_flag("--print-config", f.print_config, "print the resolved config and exit");
  app.add_flag("--self-compare", f.self_compare, "compare: theory against itself");
  app.add_flag("--theory-only", f.theory_only, "sweep: skip simulation");
  app.add_option("--sweep", f.sweep, "sweep axis, e.g. depth=1,2,3 (repeatable, at most two)");
  app.add_option("--level", f.level, "selftest level: quick | full");
  app.add_option("--corrupt", f.corrupt, "")->group("");

  const std::pair<const char*, Mode> subs[] = {{"simulate", Mode::kSimulate},
                                               {"theory", Mode::kTheory},
                                               {"compare", Mode::kCompare},
                                               {"sweep", Mode::kSweep},
                                               {"selftest", Mode::kSelftest}};
  const char* help[] = {"Monte Carlo spectra of JJᵀ", "limiting spectrum by free multiplicative convolution",
                        "simulation against theory, with a JSON report", "grid of theory or compare runs",
                        "built-in invariant checks"};
  std::vector<CLI::App*> commands;
  for (std::size_t i = 0; i < 5; ++i) commands.push_back(app.add_subcommand(subs[i].first, help[i]));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    for (std::size_t i = 0; i < 5; ++i) {
      if (commands[i]->parsed()) return run(subs[i].second, f, app);
    }
    return kFailure;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const jacspec::ConvergenceError& e) {
    std::cerr << "solver did not converge: " << e.what() << '\n';
    if (!e.trajectory().empty()) {
      std::cerr << "  residual trajectory: first " << e.trajectory().front() << ", last " << e.trajectory().back()
                << " over " << e.trajectory().size() << " iterations\n";
    }
    return kNonConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
