#include "jacspec/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <thread>

#include "jacspec/error.hpp"
#include "jacspec/io.hpp"

namespace jacspec::experiment {

using measures::SpectralMeasure;
using nlohmann::json;
namespace fs = std::filesystem;

Mode parse_mode(const std::string& s) {
  if (s == "simulate") return Mode::kSimulate;
  if (s == "theory") return Mode::kTheory;
  if (s == "compare") return Mode::kCompare;
  if (s == "sweep") return Mode::kSweep;
  if (s == "selftest") return Mode::kSelftest;
  throw ConfigError("mode", "unknown mode '" + s + "'");
}

const char* to_string(Mode m) {
  switch (m) {
    case Mode::kSimulate:
      return "simulate";
    case Mode::kTheory:
      return "theory";
    case Mode::kCompare:
      return "compare";
    case Mode::kSweep:
      return "sweep";
    case Mode::kSelftest:
      return "selftest";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  if (depth < 1) throw ConfigError("network.depth", "must be >= 1");
  if (width < 1) throw ConfigError("network.width", "must be >= 1");
  if (!(sigma_b2 >= 0.0) || !std::isfinite(sigma_b2)) throw ConfigError("network.sigma_b2", "must be finite and >= 0");
  try {
    net::Nonlinearity::parse(phi);
  } catch (const ConfigError& e) {
    throw ConfigError("network.phi", e.what());
  }
  if (q0 && (!(*q0 > sigma_b2) || !std::isfinite(*q0))) {
    throw ConfigError("network.q0", "must exceed sigma_b2 strictly (the input vector must be nonzero)");
  }
  if (input != "constant" && input != "iid") throw ConfigError("network.input", "expected 'constant' or 'iid'");
  if (trials < 1) throw ConfigError("run.trials", "must be >= 1");
  if (grid.points < 2) throw ConfigError("run.grid.points", "must be >= 2");
  if (!(grid.lambda_min >= 0.0) || !std::isfinite(grid.lambda_min)) {
    throw ConfigError("run.grid.lambda_min", "must be finite and >= 0");
  }
  if (grid.lambda_max && !(*grid.lambda_max > grid.lambda_min && std::isfinite(*grid.lambda_max))) {
    throw ConfigError("run.grid.lambda_max", "must be finite and > lambda_min");
  }
  if (epsilon && !(*epsilon > 0.0 && std::isfinite(*epsilon))) throw ConfigError("run.epsilon", "must be > 0");
  if (quadrature_order < 1) throw ConfigError("theory.quadrature_order", "must be >= 1");
  if (kernel_atoms < 1) throw ConfigError("theory.kernel_atoms", "must be >= 1");
  if (sweep.size() > 2) throw ConfigError("sweep", "at most two axes may be swept");
  for (const auto& axis : sweep) {
    if (axis.name != "depth" && axis.name != "gain" && axis.name != "sigma_b2" && axis.name != "q0") {
      throw ConfigError("sweep." + axis.name, "unknown axis (expected depth, gain, sigma_b2 or q0)");
    }
    if (axis.values.empty()) throw ConfigError("sweep." + axis.name, "needs at least one value");
    for (const double v : axis.values) {
      if (!std::isfinite(v)) throw ConfigError("sweep." + axis.name, "values must be finite");
      if (axis.name == "depth" && (v < 1.0 || v != std::floor(v))) {
        throw ConfigError("sweep.depth", "values must be positive integers");
      }
    }
  }
  if (sweep.size() == 2 && sweep[0].name == sweep[1].name) throw ConfigError("sweep", "axes must differ");
  if (mode == Mode::kSweep && sweep.empty()) throw ConfigError("sweep", "sweep mode needs one or two axes");
  if (selftest_level != "quick" && selftest_level != "full") {
    throw ConfigError("selftest.level", "expected 'quick' or 'full'");
  }
}

namespace {

template <typename T>
T get_field(const json& j, const std::string& field) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(field, "has the wrong type");
  }
}

void expect_object(const json& j, const std::string& field) {
  if (!j.is_object()) throw ConfigError(field, "must be an object");
}

std::size_t get_count(const json& j, const std::string& field) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw ConfigError(field, "must be a nonnegative integer");
  return j.get<std::size_t>();
}

}  // namespace

ExperimentConfig config_from_json(const json& j, ExperimentConfig c) {
  expect_object(j, "config");
  for (const auto& [key, value] : j.items()) {
    if (key == "mode") {
      c.mode = parse_mode(get_field<std::string>(value, "mode"));
    } else if (key == "network") {
      expect_object(value, "network");
      for (const auto& [k, v] : value.items()) {
        const std::string f = "network." + k;
        if (k == "depth") {
          c.depth = get_count(v, f);
        } else if (k == "width") {
          c.width = get_count(v, f);
        } else if (k == "widths") {
          if (!v.is_array() || v.empty()) throw ConfigError(f, "must be a non-empty array");
          const auto first = get_count(v[0], f);
          for (const auto& w : v) {
            if (get_count(w, f) != first) {
              throw ConfigError(f, "layers of unequal width are not supported (all widths must be equal)");
            }
          }
          c.width = first;
        } else if (k == "sigma_b2") {
          c.sigma_b2 = get_field<double>(v, f);
        } else if (k == "phi") {
          c.phi = get_field<std::string>(v, f);
        } else if (k == "q0") {
          if (v.is_string()) {
            if (v.get<std::string>() != "fixed_point") throw ConfigError(f, "expected a number or 'fixed_point'");
            c.q0.reset();
          } else {
            c.q0 = get_field<double>(v, f);
          }
        } else if (k == "input") {
          c.input = get_field<std::string>(v, f);
        } else {
          throw ConfigError(f, "unknown key");
        }
      }
    } else if (key == "run") {
      expect_object(value, "run");
      for (const auto& [k, v] : value.items()) {
        const std::string f = "run." + k;
        if (k == "trials") {
          c.trials = get_count(v, f);
        } else if (k == "epsilon") {
          if (v.is_null() || (v.is_string() && v.get<std::string>() == "auto")) {
            c.epsilon.reset();
          } else {
            c.epsilon = get_field<double>(v, f);
          }
        } else if (k == "grid") {
          expect_object(v, f);
          for (const auto& [gk, gv] : v.items()) {
            const std::string gf = f + "." + gk;
            if (gk == "lambda_min") {
              c.grid.lambda_min = get_field<double>(gv, gf);
            } else if (gk == "lambda_max") {
              if (gv.is_null() || (gv.is_string() && gv.get<std::string>() == "auto")) {
                c.grid.lambda_max.reset();
              } else {
                c.grid.lambda_max = get_field<double>(gv, gf);
              }
            } else if (gk == "points") {
              c.grid.points = get_count(gv, gf);
            } else {
              throw ConfigError(gf, "unknown key");
            }
          }
        } else {
          throw ConfigError(f, "unknown key");
        }
      }
    } else if (key == "theory") {
      expect_object(value, "theory");
      for (const auto& [k, v] : value.items()) {
        const std::string f = "theory." + k;
        if (k == "quadrature_order") {
          c.quadrature_order = get_count(v, f);
        } else if (k == "kernel_atoms") {
          c.kernel_atoms = get_count(v, f);
        } else if (k == "bias_convention") {
          try {
            c.convention = freeconv::parse_bias_convention(get_field<std::string>(v, f));
          } catch (const ConfigError&) {
            throw ConfigError(f, "expected 'ql' or 'qlql'");
          }
        } else {
          throw ConfigError(f, "unknown key");
        }
      }
    } else if (key == "output") {
      expect_object(value, "output");
      for (const auto& [k, v] : value.items()) {
        const std::string f = "output." + k;
        if (k == "output_dir") {
          c.output_dir = get_field<std::string>(v, f);
        } else if (k == "master_seed") {
          if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
            throw ConfigError(f, "must be an unsigned 64-bit integer");
          }
          c.master_seed = v.get<std::uint64_t>();
        } else if (k == "self_compare") {
          c.self_compare = get_field<bool>(v, f);
        } else if (k == "theory_only") {
          c.theory_only = get_field<bool>(v, f);
        } else {
          throw ConfigError(f, "unknown key");
        }
      }
    } else if (key == "sweep") {
      expect_object(value, "sweep");
      c.sweep.clear();
      for (const auto& [k, v] : value.items()) {
        if (!v.is_array()) throw ConfigError("sweep." + k, "must be an array of values");
        c.sweep.push_back({k, get_field<std::vector<double>>(v, "sweep." + k)});
      }
    } else if (key == "selftest") {
      expect_object(value, "selftest");
      for (const auto& [k, v] : value.items()) {
        if (k != "level") throw ConfigError("selftest." + k, "unknown key");
        c.selftest_level = get_field<std::string>(v, "selftest.level");
      }
    } else if (key == "resolved") {
      // written alongside outputs; recomputed on load
      expect_object(value, "resolved");
    } else {
      throw ConfigError(key, "unknown key");
    }
  }
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json sweep = json::object();
  for (const auto& axis : c.sweep) sweep[axis.name] = axis.values;
  return {
      {"mode", to_string(c.mode)},
      {"network",
       {{"depth", c.depth},
        {"width", c.width},
        {"sigma_b2", c.sigma_b2},
        {"phi", c.phi},
        {"q0", c.q0 ? json(*c.q0) : json("fixed_point")},
        {"input", c.input}}},
      {"run",
       {{"trials", c.trials},
        {"grid",
         {{"lambda_min", c.grid.lambda_min},
          {"lambda_max", c.grid.lambda_max ? json(*c.grid.lambda_max) : json("auto")},
          {"points", c.grid.points}}},
        {"epsilon", c.epsilon ? json(*c.epsilon) : json("auto")}}},
      {"theory",
       {{"quadrature_order", c.quadrature_order},
        {"kernel_atoms", c.kernel_atoms},
        {"bias_convention", freeconv::to_string(c.convention)}}},
      {"output",
       {{"output_dir", c.output_dir},
        {"master_seed", c.master_seed},
        {"self_compare", c.self_compare},
        {"theory_only", c.theory_only}}},
      {"sweep", sweep},
      {"selftest", {{"level", c.selftest_level}}},
  };
}

Resolved resolve(const ExperimentConfig& c) {
  c.validate();
  Resolved r;
  r.phi = net::Nonlinearity::parse(c.phi);
  const auto gh = freeconv::QuadratureRule::gauss_hermite(c.quadrature_order);
  if (c.q0) {
    r.q0 = *c.q0;
  } else {
    try {
      r.q0 = freeconv::q_fixed_point(r.phi, c.sigma_b2, gh, c.convention);
    } catch (const DomainError& e) {
      throw ConfigError("network.q0", std::string("fixed_point requested but ") + e.what());
    }
    if (!(r.q0 > c.sigma_b2)) throw ConfigError("network.q0", "the fixed point does not exceed sigma_b2");
  }
  double lambda_max = 0.0;
  if (c.grid.lambda_max) {
    lambda_max = *c.grid.lambda_max;
  } else {
    const auto profile = freeconv::q_recursion(r.phi, r.q0, c.sigma_b2, c.depth, gh, c.convention);
    const auto atoms = freeconv::QuadratureRule::gaussian_quantiles(c.kernel_atoms);
    double reach = 1.0;
    for (std::size_t l = 0; l < c.depth; ++l) reach *= freeconv::nu_K(r.phi, profile.values[l], atoms).support_max();
    lambda_max = reach > 0.0 ? 1.25 * reach : 1.0;
    if (!(lambda_max > c.grid.lambda_min)) lambda_max = c.grid.lambda_min + 1.0;
  }
  r.grid = measures::UniformGrid{c.grid.lambda_min, lambda_max, c.grid.points};
  r.epsilon = c.epsilon ? *c.epsilon : 2.0 * r.grid.spacing();
  return r;
}

json resolved_to_json(const Resolved& r) {
  return {{"phi", r.phi.id()},
          {"q0", r.q0},
          {"grid", {{"lambda_min", r.grid.lambda_min}, {"lambda_max", r.grid.lambda_max}, {"points", r.grid.points}}},
          {"epsilon", r.epsilon}};
}

std::size_t thread_count(std::size_t tasks) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("JACSPEC_THREADS")) {
    char* end = nullptr;
    const unsigned long long cap = std::strtoull(env, &end, 10);
    if (end != env && cap > 0) n = std::min<std::size_t>(n, cap);
  }
  return std::max<std::size_t>(1, std::min(n, tasks));
}

namespace {

// Runs job(i) for i in [0, count) on a small pool. The first exception by
// index is rethrown.
template <typename Job>
void parallel_for(std::size_t count, Job job) {
  const std::size_t workers = thread_count(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

net::NetworkConfig network_config(const ExperimentConfig& c, const Resolved& r, rng::RngSeed seed) {
  net::NetworkConfig nc;
  nc.depth = c.depth;
  nc.width = c.width;
  nc.sigma_b2 = c.sigma_b2;
  nc.phi = r.phi;
  if (c.input == "iid") {
    nc.input = net::IidFromSeed{r.q0 - c.sigma_b2};
  } else {
    nc.input = net::ConstantNorm{r.q0};
  }
  nc.seed = seed;
  return nc;
}

std::vector<double> moments4(const SpectralMeasure& mu) {
  std::vector<double> m(4);
  for (int k = 1; k <= 4; ++k) m[static_cast<std::size_t>(k - 1)] = measures::moment(mu, k);
  return m;
}

json isometry_json(const freeconv::IsometryMetrics& m) {
  return {{"mean_sv", m.mean_sv}, {"var_sv", m.var_sv}, {"mass_within", m.mass_within}};
}

json conventions_json(const ExperimentConfig& c, const Resolved& r) {
  json j = resolved_to_json(r);
  j["sigma_b2"] = c.sigma_b2;
  j["input"] = c.input;
  j["bias_convention"] = freeconv::to_string(c.convention);
  j["quadrature_order"] = c.quadrature_order;
  j["kernel_atoms"] = c.kernel_atoms;
  j["prng"] = "xoshiro256++ seeded by splitmix64; trial seed = master_seed + trial_index";
  j["haar"] = "householder qr, columns times sign(diag r), last column negated when det = -1";
  j["kink_derivative"] = 0.0;
  return j;
}

double peak_lambda(const SpectralMeasure& density) {
  if (const auto* g = density.as_grid()) {
    const auto it = std::max_element(g->values.begin(), g->values.end());
    return g->grid[static_cast<std::size_t>(it - g->values.begin())];
  }
  if (const auto* at = density.as_atomic()) {
    const auto it = std::max_element(at->weights.begin(), at->weights.end());
    return at->positions[static_cast<std::size_t>(it - at->weights.begin())];
  }
  return 0.0;
}

void write_theory_files(const fs::path& dir, const TheoryResult& t) {
  io::write_density_csv(dir / "density.csv", t.density);
  json q = {{"bias_convention", freeconv::to_string(t.depth.profile.convention)},
            {"sigma_b2", t.depth.profile.sigma_b2},
            {"q", t.depth.profile.values}};
  io::write_json(dir / "q_profile.json", q);
  io::write_diagnostics_csv(dir / "diagnostics.csv", t.depth.diagnostics);
}

void write_simulation_files(const fs::path& dir, const SimulationResult& s, const Resolved& r) {
  io::write_eigenvalues_csv(dir / "eigenvalues.csv", s.pooled);
  const double hi = std::max(r.grid.lambda_max, s.pooled.empty() ? 0.0 : s.pooled.back());
  const auto bins = io::histogram(s.pooled, r.grid.lambda_min, hi, 200);
  io::write_histogram_csv(dir / "histogram.csv", bins);
}

void write_config(const fs::path& dir, const ExperimentConfig& c, const Resolved& r) {
  json j = config_to_json(c);
  j["resolved"] = resolved_to_json(r);
  io::write_json(dir / "config.json", j);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

SimulationResult simulate_trials(const ExperimentConfig& c, const Resolved& r) {
  SimulationResult out;
  out.per_trial.resize(c.trials);
  out.trial_seeds.resize(c.trials);
  for (std::size_t i = 0; i < c.trials; ++i) {
    out.trial_seeds[i] = rng::trial_seed(rng::RngSeed{c.master_seed}, i).value;
  }
  parallel_for(c.trials, [&](std::size_t i) {
    const auto nc = network_config(c, r, rng::RngSeed{out.trial_seeds[i]});
    out.per_trial[i] = net::jacobian_spectrum(nc).eigenvalues;
  });
  for (const auto& t : out.per_trial) out.pooled.insert(out.pooled.end(), t.begin(), t.end());
  std::sort(out.pooled.begin(), out.pooled.end());
  return out;
}

TheoryResult compute_theory(const ExperimentConfig& c, const Resolved& r) {
  freeconv::TheoryOptions opt;
  opt.quadrature_order = c.quadrature_order;
  opt.kernel_atoms = c.kernel_atoms;
  opt.convention = c.convention;
  auto depth = freeconv::depth_spectrum(r.phi, r.q0, c.sigma_b2, c.depth, r.grid, r.epsilon, opt);
  SpectralMeasure density =
      depth.spectrum.as_grid() ? depth.spectrum : freeconv::smoothed(depth.spectrum, r.grid, r.epsilon);
  return {std::move(depth), std::move(density)};
}

SimulationResult run_simulate(const ExperimentConfig& c) {
  const auto r = resolve(c);
  auto sim = simulate_trials(c, r);
  if (!c.output_dir.empty()) {
    write_simulation_files(c.output_dir, sim, r);
    write_config(c.output_dir, c, r);
  }
  return sim;
}

TheoryResult run_theory(const ExperimentConfig& c) {
  const auto r = resolve(c);
  auto t = compute_theory(c, r);
  if (!c.output_dir.empty()) {
    write_theory_files(c.output_dir, t);
    write_config(c.output_dir, c, r);
  }
  return t;
}

json ComparisonReport::to_json() const {
  return {{"ks", ks},
          {"moments_empirical", moments_empirical},
          {"moments_theory", moments_theory},
          {"isometry_empirical", isometry_json(isometry_empirical)},
          {"isometry_theory", isometry_json(isometry_theory)},
          {"trials", trials},
          {"n", n},
          {"L", depth},
          {"wall_time_seconds", wall_time_seconds},
          {"seeds", {{"master_seed", master_seed}, {"trial_seeds", trial_seeds}}},
          {"conventions", conventions},
          {"self_compare", self_compare}};
}

namespace {

ComparisonReport compare_with(const ExperimentConfig& c, const Resolved& r, const TheoryResult& theory,
                              const SimulationResult* sim) {
  ComparisonReport rep;
  const SpectralMeasure& th = theory.depth.spectrum;
  rep.moments_theory = moments4(th);
  rep.isometry_theory = freeconv::isometry_metrics(th);
  if (sim) {
    const auto emp = SpectralMeasure::empirical(sim->pooled);
    rep.ks = measures::ks_distance(emp, th);
    rep.moments_empirical = moments4(emp);
    rep.isometry_empirical = freeconv::isometry_metrics(emp);
    rep.trial_seeds = sim->trial_seeds;
  } else {
    rep.ks = measures::ks_distance(th, th);
    rep.moments_empirical = rep.moments_theory;
    rep.isometry_empirical = rep.isometry_theory;
  }
  rep.trials = sim ? c.trials : 0;
  rep.n = c.width;
  rep.depth = c.depth;
  rep.master_seed = c.master_seed;
  rep.conventions = conventions_json(c, r);
  rep.self_compare = sim == nullptr;
  return rep;
}

}  // namespace

ComparisonReport run_compare(const ExperimentConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = resolve(c);
  const auto theory = compute_theory(c, r);
  std::optional<SimulationResult> sim;
  if (!c.self_compare) sim = simulate_trials(c, r);
  auto rep = compare_with(c, r, theory, sim ? &*sim : nullptr);
  rep.wall_time_seconds = seconds_since(t0);
  if (!c.output_dir.empty()) {
    const fs::path dir = c.output_dir;
    write_theory_files(dir, theory);
    if (sim) write_simulation_files(dir, *sim, r);
    write_config(dir, c, r);
    io::write_json(dir / "report.json", rep.to_json());
  }
  return rep;
}

SweepResult run_sweep(const ExperimentConfig& c) {
  c.validate();
  if (c.sweep.empty()) throw ConfigError("sweep", "sweep mode needs one or two axes");
  SweepResult out;
  for (const auto& axis : c.sweep) out.axes.push_back(axis.name);

  std::vector<std::vector<double>> cells{{}};
  for (const auto& axis : c.sweep) {
    std::vector<std::vector<double>> next;
    for (const auto& cell : cells) {
      for (const double v : axis.values) {
        auto extended = cell;
        extended.push_back(v);
        next.push_back(std::move(extended));
      }
    }
    cells = std::move(next);
  }

  for (const auto& cell : cells) {
    ExperimentConfig cc = c;
    cc.mode = c.theory_only ? Mode::kTheory : Mode::kCompare;
    cc.sweep.clear();
    cc.output_dir.clear();
    auto phi = net::Nonlinearity::parse(c.phi);
    for (std::size_t a = 0; a < c.sweep.size(); ++a) {
      const auto& name = c.sweep[a].name;
      const double v = cell[a];
      if (name == "depth") {
        cc.depth = static_cast<std::size_t>(v);
      } else if (name == "gain") {
        if (!(v > 0.0)) throw ConfigError("sweep.gain", "values must be positive");
        phi = net::Nonlinearity(phi.kind(), v);
        cc.phi = phi.id();
      } else if (name == "sigma_b2") {
        cc.sigma_b2 = v;
      } else {
        cc.q0 = v;
      }
    }
    cc.validate();
    const auto r = resolve(cc);
    const auto theory = compute_theory(cc, r);
    SweepRow row;
    row.axis_values = cell;
    row.depth = cc.depth;
    row.gain = r.phi.gain();
    row.sigma_b2 = cc.sigma_b2;
    row.q0 = r.q0;
    row.moments_theory = moments4(theory.depth.spectrum);
    row.isometry_theory = freeconv::isometry_metrics(theory.depth.spectrum);
    row.peak_lambda = peak_lambda(theory.density);
    if (!c.theory_only) {
      const auto sim = simulate_trials(cc, r);
      row.report = compare_with(cc, r, theory, &sim);
    }
    out.rows.push_back(std::move(row));
  }
  if (!c.output_dir.empty()) {
    write_sweep_csv((fs::path(c.output_dir) / "sweep.csv").string(), out);
    json j = config_to_json(c);
    io::write_json(fs::path(c.output_dir) / "config.json", j);
  }
  return out;
}

void write_sweep_csv(const std::string& path, const SweepResult& s) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  const bool compare = !s.rows.empty() && s.rows.front().report.has_value();
  out << "depth,gain,sigma_b2,q0,m1_theory,m2_theory,m3_theory,m4_theory,mean_sv_theory,var_sv_theory,"
         "mass_within_theory,peak_lambda";
  if (compare) {
    out << ",ks,m1_empirical,m2_empirical,m3_empirical,m4_empirical,mean_sv_empirical,var_sv_empirical,"
           "mass_within_empirical";
  }
  out << '\n';
  const auto f = io::format_double;
  for (const auto& row : s.rows) {
    out << row.depth << ',' << f(row.gain) << ',' << f(row.sigma_b2) << ',' << f(row.q0);
    for (const double m : row.moments_theory) out << ',' << f(m);
    out << ',' << f(row.isometry_theory.mean_sv) << ',' << f(row.isometry_theory.var_sv) << ','
        << f(row.isometry_theory.mass_within) << ',' << f(row.peak_lambda);
    if (compare && row.report) {
      const auto& rep = *row.report;
      out << ',' << f(rep.ks);
      for (const double m : rep.moments_empirical) out << ',' << f(m);
      out << ',' << f(rep.isometry_empirical.mean_sv) << ',' << f(rep.isometry_empirical.var_sv) << ','
          << f(rep.isometry_empirical.mass_within);
    }
    out << '\n';
  }
}

}  // namespace jacspec::experiment
