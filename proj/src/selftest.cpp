#include "jacspec/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

#include "jacspec/error.hpp"
#include "jacspec/experiment.hpp"
#include "jacspec/free_conv.hpp"
#include "jacspec/measures.hpp"
#include "jacspec/network.hpp"
#include "jacspec/rng.hpp"

namespace jacspec::selftest {

using measures::Complex;
using measures::SpectralMeasure;

bool Summary::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

namespace {

std::string num(double x) {
  std::ostringstream s;
  s.precision(6);
  s << x;
  return s.str();
}

struct Outcome {
  bool passed;
  std::string observed;
  std::string expected;
};

void run_check(Summary& out, const std::string& module, const std::string& id, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r{module, id, false, "", "", 0.0};
  try {
    const auto o = fn();
    r.passed = o.passed;
    r.observed = o.observed;
    r.expected = o.expected;
  } catch (const std::exception& e) {
    r.observed = std::string("exception: ") + e.what();
    r.expected = "no exception";
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.checks.push_back(std::move(r));
}

Outcome haar_moments(std::size_t draws, bool sign_fix) {
  const std::size_t n = 8;
  rng::Generator gen(rng::RngSeed{20240601});
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd mean2 = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t s = 0; s < draws; ++s) {
    const auto o = rng::sample_haar_orthogonal(n, gen, rng::HaarOptions{sign_fix});
    mean += o.matrix();
    mean2 += o.matrix().cwiseAbs2();
  }
  mean /= static_cast<double>(draws);
  mean2 /= static_cast<double>(draws);
  const double bound = 4.0 / std::sqrt(static_cast<double>(n * draws));
  std::size_t inside = 0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) inside += std::abs(mean.data()[i]) < bound ? 1 : 0;
  const double frac = static_cast<double>(inside) / static_cast<double>(mean.size());
  const double dev2 = (mean2.array() - 1.0 / static_cast<double>(n)).abs().maxCoeff();
  return {frac >= 0.95 && dev2 < 5e-3,
          "fraction |E O_jk| < " + num(bound) + ": " + num(frac) + ", max |E O_jk^2 - 1/8|: " + num(dev2),
          "fraction >= 0.95, max < 0.005"};
}

Outcome haar_group() {
  rng::Generator gen(rng::RngSeed{7});
  double orth = 0.0, det = 0.0;
  for (int s = 0; s < 100; ++s) {
    const auto o = rng::sample_haar_orthogonal(16, gen);
    const auto& m = o.matrix();
    orth = std::max(orth, (m.transpose() * m - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff());
    det = std::max(det, std::abs(m.determinant() - 1.0));
  }
  return {orth < 1e-12 && det < 1e-9, "max |OᵀO - I| " + num(orth) + ", max |det - 1| " + num(det),
          "< 1e-12 and < 1e-9"};
}

Outcome gaussian_variance() {
  rng::Generator gen(rng::RngSeed{11});
  const auto v = rng::sample_gaussian_vector(100000, 0.25, gen).values;
  const double mean = v.mean();
  const double var = (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
  return {var >= 0.24 && var <= 0.26, "sample variance " + num(var), "in [0.24, 0.26]"};
}

Outcome depth_one_identity() {
  net::NetworkConfig c;
  c.depth = 1;
  c.width = 64;
  c.sigma_b2 = 0.1;
  c.phi = net::Nonlinearity::parse("sin:1");
  c.input = net::ConstantNorm{1.0};
  c.seed = rng::RngSeed{3};
  const auto trace = net::forward_pass(c);
  const auto spec = net::empirical_ncm(net::gram_matrix(net::assemble_jacobian(trace)));
  std::vector<double> d2(trace.layers[0].derivative.size());
  for (std::size_t i = 0; i < d2.size(); ++i) {
    const double d = trace.layers[0].derivative(static_cast<Eigen::Index>(i));
    d2[i] = d * d;
  }
  std::sort(d2.begin(), d2.end());
  double err = 0.0;
  for (std::size_t i = 0; i < d2.size(); ++i) err = std::max(err, std::abs(d2[i] - spec.eigenvalues[i]));
  return {err < 1e-10, "max eigenvalue deviation " + num(err), "< 1e-10"};
}

Outcome chain_rule() {
  net::NetworkConfig c;
  c.depth = 3;
  c.width = 20;
  c.sigma_b2 = 0.1;
  c.phi = net::Nonlinearity::parse("erf:1.5");
  c.input = net::IidFromSeed{1.0};
  c.seed = rng::RngSeed{5};
  const auto trace = net::forward_pass(c);
  std::vector<rng::OrthogonalMatrix> weights;
  std::vector<Eigen::VectorXd> biases;
  for (const auto& l : trace.layers) {
    weights.push_back(l.weight);
    biases.push_back(l.bias);
  }
  const auto j = net::assemble_jacobian(trace);
  const double h = 1e-5;
  Eigen::MatrixXd fd(20, 20);
  for (Eigen::Index k = 0; k < 20; ++k) {
    Eigen::VectorXd xp = trace.input, xm = trace.input;
    xp(k) += h;
    xm(k) -= h;
    const auto tp = net::forward_pass(c.phi, c.sigma_b2, xp, weights, biases);
    const auto tm = net::forward_pass(c.phi, c.sigma_b2, xm, weights, biases);
    fd.col(k) = (tp.layers.back().activation - tm.layers.back().activation) / (2.0 * h);
  }
  const double rel = (fd - j).norm() / j.norm();
  return {rel < 1e-5, "relative Frobenius error " + num(rel), "< 1e-5"};
}

Outcome transform_consistency() {
  const auto mu = SpectralMeasure::atomic({0.5, 1.0, 3.0}, {0.2, 0.5, 0.3});
  double worst = 0.0;
  for (const Complex w : {Complex(-0.3, 0.1), Complex(0.05, 0.2), Complex(-1.5, -0.4), Complex(-0.1, 0.0)}) {
    // Direct series sum versus the transform identity.
    Complex direct = 0.0;
    const auto* at = mu.as_atomic();
    for (std::size_t i = 0; i < at->positions.size(); ++i) {
      direct += at->weights[i] * w * at->positions[i] / (1.0 - w * at->positions[i]);
    }
    const Complex via = -1.0 - measures::stieltjes(mu, 1.0 / w) / w;
    worst = std::max(worst, std::abs(direct - via));
  }
  const double w0 = -0.37;
  const double back = measures::inverse_mgf(mu, measures::mgf(mu, w0).real());
  worst = std::max(worst, std::abs(back - w0));
  return {worst < 1e-10, "max defect " + num(worst), "< 1e-10"};
}

Outcome q_recursion_analytic() {
  const auto phi = net::Nonlinearity::parse("sin:1");
  const auto prof = freeconv::q_recursion(phi, 1.0, 0.1, 10, freeconv::QuadratureRule::gauss_hermite(81));
  double worst = 0.0;
  for (std::size_t l = 1; l < prof.values.size(); ++l) {
    const double expect = (1.0 - std::exp(-2.0 * prof.values[l - 1])) / 2.0 + 0.1;
    worst = std::max(worst, std::abs(prof.values[l] - expect));
  }
  return {worst < 1e-12, "max step error " + num(worst), "< 1e-12"};
}

Outcome s_multiplicativity() {
  const auto k = SpectralMeasure::atomic({0.25, 1.0}, {0.5, 0.5});
  const auto r = SpectralMeasure::atomic({1.0, 4.0}, {0.5, 0.5});
  double worst = 0.0;
  for (const double m : {-0.3, -0.2, -0.1, -0.05}) {
    measures::RealMgf mgf_m;
    mgf_m.value = [&](double w) {
      if (w == 0.0) return 0.0;
      const auto sol = freeconv::solve_fixed_point(k, r, Complex(1.0 / w, 0.0));
      return -1.0 - sol.f_m.real() / w;
    };
    mgf_m.pole = 1.0 / 4.0;
    const double sm = measures::s_transform(mgf_m, m);
    worst = std::max(worst, std::abs(sm - measures::s_transform(k, m) * measures::s_transform(r, m)));
  }
  return {worst < 1e-4, "max |S_M - S_K S_R| " + num(worst), "< 1e-4"};
}

Outcome herglotz(bool corrupt_root) {
  const auto k = SpectralMeasure::atomic({0.0, 0.25, 1.0}, {0.2, 0.4, 0.4});
  const auto r = SpectralMeasure::atomic({1.0, 4.0}, {0.5, 0.5});
  freeconv::FixedPointOptions opt;
  if (corrupt_root) {
    opt.root_policy = freeconv::RootPolicy::kOpposite;
    opt.enforce_tolerance = false;
  }
  std::size_t bad = 0, total = 0;
  for (const double eps : {0.01, 0.1, 1.0}) {
    for (double lambda = 0.0; lambda <= 5.0; lambda += 0.25) {
      const auto s = freeconv::solve_fixed_point(k, r, Complex(lambda, eps), opt);
      ++total;
      if (!(s.f_m.imag() > 0.0 && s.h_k.imag() > 0.0 && s.h_r.imag() > 0.0)) ++bad;
    }
  }
  double prev = std::numeric_limits<double>::infinity();
  for (double xi = 1.0; xi <= 100.0; xi *= 1.5) {
    const auto s = freeconv::solve_fixed_point(k, r, Complex(-xi, 0.0), opt);
    ++total;
    const double f = s.f_m.real();
    const bool ok = s.f_m.imag() == 0.0 && f > 0.0 && f < prev && xi * f > 0.0 && xi * f <= 1.0 &&
                    std::abs(xi * f - 1.0) < 4.0 / xi;
    if (!ok) ++bad;
    prev = f;
  }
  return {bad == 0, num(static_cast<double>(bad)) + " of " + num(static_cast<double>(total)) + " points violate",
          "0 violations"};
}

Outcome master_identity() {
  const auto delta = SpectralMeasure::point_mass(1.0);
  auto mk = [&](Complex w) { return measures::mgf(delta, w); };
  double worst = 0.0;
  for (const std::size_t l : {1u, 2u, 3u, 5u}) {
    const Complex z(-0.3, 0.0);
    worst = std::max(worst, std::abs(freeconv::master_equation(mk, l, z) - z / (1.0 - z)));
  }
  return {worst < 1e-12, "max |m - z/(1-z)| " + num(worst), "< 1e-12"};
}

Outcome delta_algebra() {
  const measures::UniformGrid grid{0.0, 8.0, 2001};
  const double eps = 2.0 * grid.spacing();
  const auto out = freeconv::free_mult_conv(SpectralMeasure::point_mass(2.0), SpectralMeasure::point_mass(3.0),
                                            grid, eps);
  const double lobe = out.cdf(6.0 + 100.0 * eps) - out.cdf_left(6.0 - 100.0 * eps);
  return {std::abs(lobe - 1.0) <= 1e-2, "lobe mass " + num(lobe), "1 ± 0.01"};
}

Outcome compare_small() {
  experiment::ExperimentConfig c;
  c.depth = 2;
  c.width = 256;
  c.trials = 4;
  c.sigma_b2 = 0.1;
  c.phi = "sin:1";
  c.master_seed = 99;
  c.grid.lambda_max = 1.2;
  c.grid.points = 2401;
  const auto rep = experiment::run_compare(c);
  return {rep.ks < 0.06, "ks " + num(rep.ks), "< 0.06"};
}

}  // namespace

Summary run_selftest(const std::string& level, const Hooks& hooks) {
  if (level != "quick" && level != "full") throw ConfigError("selftest.level", "expected 'quick' or 'full'");
  const bool full = level == "full";
  Summary s;
  run_check(s, "rng_core", "haar_moments", [&] { return haar_moments(10000, !hooks.corrupt_qr_sign_fix); });
  run_check(s, "rng_core", "haar_group", haar_group);
  run_check(s, "rng_core", "gaussian_variance", gaussian_variance);
  run_check(s, "network_sim", "depth_one_identity", depth_one_identity);
  run_check(s, "network_sim", "chain_rule", chain_rule);
  run_check(s, "measures", "transform_consistency", transform_consistency);
  run_check(s, "free_conv", "q_recursion_analytic", q_recursion_analytic);
  run_check(s, "free_conv", "s_multiplicativity", s_multiplicativity);
  run_check(s, "free_conv", "herglotz", [&] { return herglotz(hooks.corrupt_root_choice); });
  run_check(s, "free_conv", "master_identity", master_identity);
  if (full) {
    run_check(s, "rng_core", "haar_moments_1e5", [&] { return haar_moments(100000, !hooks.corrupt_qr_sign_fix); });
    run_check(s, "free_conv", "delta_algebra", delta_algebra);
    run_check(s, "cli_bench", "compare_small", compare_small);
  }
  return s;
}

}  // namespace jacspec::selftest
