#include "jacspec/free_conv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "jacspec/error.hpp"

namespace jacspec::freeconv {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool finite(Complex c) { return std::isfinite(c.real()) && std::isfinite(c.imag()); }

// f and f' of a measure, one pass for atoms.
class Transform {
 public:
  explicit Transform(const SpectralMeasure& mu) : mu_(mu) {
    if (const auto* at = mu.as_atomic()) {
      pos_ = at->positions;
      wts_ = at->weights;
    } else if (const auto* em = mu.as_empirical()) {
      pos_ = em->eigenvalues;
      wts_.assign(pos_.size(), 1.0 / static_cast<double>(pos_.size()));
    } else {
      grid_ = true;
    }
  }

  // Non-finite output when w is not an admissible argument.
  void eval(Complex w, Complex* f, Complex* df) const {
    if (!finite(w)) {
      *f = *df = Complex(kNaN, kNaN);
      return;
    }
    if (grid_) {
      try {
        *f = measures::stieltjes(mu_, w);
        if (df) *df = measures::stieltjes_derivative(mu_, w);
      } catch (const DomainError&) {
        *f = Complex(kNaN, kNaN);
        if (df) *df = *f;
      }
      return;
    }
    Complex s = 0.0, ds = 0.0;
    for (std::size_t i = 0; i < pos_.size(); ++i) {
      const Complex d = 1.0 / (pos_[i] - w);
      s += wts_[i] * d;
      ds += wts_[i] * d * d;
    }
    *f = s;
    if (df) *df = ds;
  }

  Complex value(Complex w) const {
    Complex f;
    eval(w, &f, nullptr);
    return f;
  }

 private:
  const SpectralMeasure& mu_;
  bool grid_ = false;
  std::vector<double> pos_;
  std::vector<double> wts_;
};

void check_solver_point(Complex z) {
  if (!finite(z)) throw DomainError("solve_fixed_point: z must be finite");
  if (z.imag() < 0.0) throw DomainError("solve_fixed_point: Im z must be >= 0");
  if (z.imag() == 0.0 && !(z.real() < 0.0)) {
    throw DomainError("solve_fixed_point: real z must be negative");
  }
}

bool herglotz(Complex f, bool real_axis) { return real_axis ? f.real() > 0.0 : f.imag() > 0.0; }

// Largest point of the support. A grid density is usually an ε-smoothed
// intermediate whose Cauchy tails carry ~ε/(πd) of mass at distance d, so its
// reach is read at the 1e-2 tail quantile, the same tolerance the inversion
// drift guard applies to the output.
double effective_support_max(const SpectralMeasure& mu) {
  const auto* g = mu.as_grid();
  if (!g) return mu.support_max();
  for (const double x : g->grid) {
    if (mu.cdf(x) >= 1.0 - 1e-2) return x;
  }
  return g->grid.back();
}

}  // namespace

FixedPointSolution solve_fixed_point(const SpectralMeasure& nu_k, const SpectralMeasure& nu_r, Complex z,
                                     const FixedPointOptions& options) {
  check_solver_point(z);
  if (!(options.damping > 0.0 && options.damping <= 1.0)) {
    throw DomainError("solve_fixed_point: damping must lie in (0, 1]");
  }
  const bool real_axis = z.imag() == 0.0;
  const Transform tk(nu_k);
  const Transform tr(nu_r);

  FixedPointSolution sol;
  sol.z = z;

  auto admissible = [&](Complex w) {
    return real_axis ? (w.real() < 0.0 && std::isfinite(w.real())) : (w.imag() > 0.0 && finite(w));
  };
  auto project = [&](Complex w, Complex at) {
    if (admissible(w)) return real_axis ? Complex(w.real(), 0.0) : w;
    ++sol.projections;
    if (real_axis || !std::isfinite(w.real())) return at;
    return Complex(w.real(), at.imag());
  };

  // w_K ↦ zz / g_R(zz / g_K(w_K)), g(w) = w + 1/f(w), with its derivative.
  auto map = [&](Complex zz, Complex w, Complex* dmap) {
    Complex fk, dfk, fr, dfr;
    tk.eval(w, &fk, &dfk);
    const Complex g = w + 1.0 / fk;
    const Complex dg = 1.0 - dfk / (fk * fk);
    const Complex wr = zz / g;
    const Complex dwr = -zz * dg / (g * g);
    tr.eval(wr, &fr, &dfr);
    const Complex g2 = wr + 1.0 / fr;
    const Complex dg2 = 1.0 - dfr / (fr * fr);
    *dmap = -zz * dg2 / (g2 * g2) * dwr;
    return zz / g2;
  };

  std::vector<double> trajectory;
  // Solves map(zz, w) = w from w, to relative step size `tol`. Newton with
  // backtracking inside the admissible region, damped iteration otherwise.
  auto run = [&](Complex zz, Complex w, double tol) {
    Complex dt;
    Complex t = map(zz, w, &dt);
    double damping = options.damping;
    double last_damped = std::numeric_limits<double>::infinity();
    while (sol.iterations < options.max_iter) {
      ++sol.iterations;
      const Complex r = t - w;
      const double rn = std::abs(r);
      trajectory.push_back(rn);
      if (!std::isfinite(rn) || rn <= tol * std::max(1.0, std::abs(w))) break;
      const Complex step = r / (dt - 1.0);
      bool accepted = false;
      for (double scale = 1.0; scale >= 1.0 / 16.0 && !accepted; scale *= 0.5) {
        const Complex wn = w - scale * step;
        if (!admissible(wn)) continue;
        Complex dtn;
        const Complex tn = map(zz, wn, &dtn);
        if (finite(tn) && std::abs(tn - wn) < rn) {
          w = wn;
          t = tn;
          dt = dtn;
          accepted = true;
        }
      }
      if (accepted) continue;
      // Newton cannot improve: at the roundoff floor of the transforms.
      if (rn <= 1e-11 * std::max(1.0, std::abs(w))) break;
      if (rn > last_damped) damping = std::max(0.5 * damping, 1e-3);
      last_damped = rn;
      w = project(w + damping * r, zz);
      t = map(zz, w, &dt);
    }
    return w;
  };

  Complex w;
  if (options.warm_start) {
    w = run(z, project(*options.warm_start, z), 1e-14);
  } else if (real_axis) {
    w = run(z, z, 1e-14);
  } else {
    // Cold start: follow the solution down from far above the real axis.
    // Near the axis Newton from w = z can land on a spurious root.
    double y = std::max(1.0, 4.0 * std::abs(z));
    w = Complex(z.real(), y);
    while (y > 4.0 * z.imag()) {
      w = run(Complex(z.real(), y), w, 1e-8);
      y *= 0.25;
    }
    w = run(z, project(w, z), 1e-14);
  }

  sol.w_k = w;
  sol.h_r = tk.value(w);
  sol.w_r = z / (w + 1.0 / sol.h_r);
  sol.h_k = tr.value(sol.w_r);
  if (real_axis) {
    sol.w_k = Complex(sol.w_k.real(), 0.0);
    sol.h_r = Complex(sol.h_r.real(), 0.0);
    sol.w_r = Complex(sol.w_r.real(), 0.0);
    sol.h_k = Complex(sol.h_k.real(), 0.0);
  }

  // f_M from the quadratic z f² + f - h_K h_R = 0, in cancellation-free form.
  const Complex p = sol.h_k * sol.h_r;
  const Complex disc = 1.0 + 4.0 * z * p;
  const Complex s = real_axis ? Complex(std::sqrt(std::max(0.0, disc.real())), 0.0) : std::sqrt(disc);
  const Complex roots[2] = {2.0 * p / (1.0 + s), -(1.0 + s) / (2.0 * z)};
  const Complex reference = w * sol.h_r / z;
  int pick;
  const bool ok0 = herglotz(roots[0], real_axis);
  const bool ok1 = herglotz(roots[1], real_axis);
  if (ok0 != ok1) {
    pick = ok0 ? 0 : 1;
  } else {
    pick = std::abs(roots[0] - reference) <= std::abs(roots[1] - reference) ? 0 : 1;
  }
  if (options.root_policy == RootPolicy::kOpposite) pick = 1 - pick;
  sol.f_m = roots[pick];
  // Where the roots merge the square root leaves only ~1e-8 accuracy; the
  // subordination identity gives the selected branch to full precision.
  if (options.root_policy == RootPolicy::kHerglotz && finite(reference) && herglotz(reference, real_axis)) {
    sol.f_m = reference;
  }

  const Complex f = sol.f_m;
  const double d1 = std::abs((1.0 + z * f) * f - p) /
                    std::max({1.0, std::abs(f), std::abs(z * f * f), std::abs(p)});
  const Complex hk_check = tr.value(z * f / sol.h_k);
  const Complex hr_check = tk.value(z * f / sol.h_r);
  const double d2 = std::abs(sol.h_k - hk_check) / std::max({1.0, std::abs(sol.h_k), std::abs(hk_check)});
  const double d3 = std::abs(sol.h_r - hr_check) / std::max({1.0, std::abs(sol.h_r), std::abs(hr_check)});
  sol.residual = std::max({d1, d2, d3});
  if (!std::isfinite(sol.residual)) sol.residual = std::numeric_limits<double>::infinity();

  if (options.enforce_tolerance && !(sol.residual <= options.tolerance)) {
    std::ostringstream msg;
    msg << "solve_fixed_point: no convergence at z = (" << z.real() << ", " << z.imag() << ") after "
        << sol.iterations << " iterations, residual " << sol.residual;
    throw ConvergenceError(msg.str(), std::move(trajectory));
  }
  return sol;
}

ConvolutionResult free_mult_conv_detailed(const SpectralMeasure& nu_k, const SpectralMeasure& nu_r,
                                          const UniformGrid& grid, double epsilon,
                                          const FixedPointOptions& options) {
  grid.validate();
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw DomainError("free_mult_conv: epsilon must be > 0");
  const double reach = effective_support_max(nu_k) * effective_support_max(nu_r);
  if (grid.lambda_max < reach * (1.0 - 1e-12)) {
    std::ostringstream msg;
    msg << "free_mult_conv: grid ends at " << grid.lambda_max << " but the product support reaches " << reach;
    throw DomainError(msg.str());
  }

  const auto nodes = grid.nodes();
  std::vector<FixedPointSolution> points(nodes.size());
  std::vector<bool> ok(nodes.size(), false);
  std::vector<std::size_t> failed;
  std::optional<Complex> warm;
  std::string first_failure;
  std::vector<double> first_trajectory;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Complex z(nodes[i], epsilon);
    FixedPointOptions opt = options;
    opt.warm_start = warm;
    for (int attempt = 0; attempt < 2 && !ok[i]; ++attempt) {
      if (attempt == 1) {
        if (!warm) break;
        opt.warm_start.reset();
      }
      try {
        points[i] = solve_fixed_point(nu_k, nu_r, z, opt);
        ok[i] = true;
      } catch (const ConvergenceError& e) {
        if (first_failure.empty()) {
          first_failure = e.what();
          first_trajectory = e.trajectory();
        }
      }
    }
    if (ok[i]) {
      warm = points[i].w_k;
    } else {
      failed.push_back(i);
    }
  }
  if (failed.size() * 100 > nodes.size()) {
    std::ostringstream msg;
    msg << "free_mult_conv: " << failed.size() << " of " << nodes.size()
        << " grid points failed; first at lambda = " << nodes[failed.front()] << " (" << first_failure << ")";
    throw ConvergenceError(msg.str(), std::move(first_trajectory));
  }
  if (failed.size() == nodes.size()) throw ConvergenceError("free_mult_conv: every grid point failed");

  std::vector<measures::HerglotzSample> samples(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) samples[i] = {Complex(nodes[i], epsilon), points[i].f_m};
  for (const std::size_t i : failed) {
    // Linear interpolation between the nearest solved neighbours.
    std::ptrdiff_t lo = static_cast<std::ptrdiff_t>(i) - 1;
    std::size_t hi = i + 1;
    while (lo >= 0 && !ok[static_cast<std::size_t>(lo)]) --lo;
    while (hi < nodes.size() && !ok[hi]) ++hi;
    Complex f;
    if (lo < 0) {
      f = samples[hi].f;
    } else if (hi >= nodes.size()) {
      f = samples[static_cast<std::size_t>(lo)].f;
    } else {
      const auto l = static_cast<std::size_t>(lo);
      const double t = (nodes[i] - nodes[l]) / (nodes[hi] - nodes[l]);
      f = (1.0 - t) * samples[l].f + t * samples[hi].f;
    }
    samples[i].f = f;
    points[i].z = samples[i].z;
    points[i].f_m = f;
    points[i].residual = std::numeric_limits<double>::infinity();
  }
  const double zero_atom = std::max(nu_k.mass_at_zero(), nu_r.mass_at_zero());
  return {measures::stieltjes_inversion(samples, zero_atom), std::move(points), std::move(failed)};
}

SpectralMeasure free_mult_conv(const SpectralMeasure& nu_k, const SpectralMeasure& nu_r, const UniformGrid& grid,
                               double epsilon, const FixedPointOptions& options) {
  return free_mult_conv_detailed(nu_k, nu_r, grid, epsilon, options).density;
}

SpectralMeasure smoothed(const SpectralMeasure& mu, const UniformGrid& grid, double epsilon) {
  const auto samples = measures::sample_stieltjes(mu, grid, epsilon);
  return measures::stieltjes_inversion(samples, mu.mass_at_zero());
}

SpectralMeasure fold_kernels(const std::vector<SpectralMeasure>& kernels, const UniformGrid& grid, double epsilon,
                             const FixedPointOptions& options, std::vector<PointDiagnostic>* diagnostics) {
  double reach = 1.0;
  for (const auto& k : kernels) reach *= effective_support_max(k);
  SpectralMeasure acc = SpectralMeasure::point_mass(1.0);
  for (const auto& k : kernels) {
    double c = 0.0;
    // A point mass factor acts as a dilation; no solve needed.
    if (k.is_point_mass(&c) && c > 0.0) {
      acc = measures::dilate(acc, c);
      continue;
    }
    if (acc.is_point_mass(&c) && c > 0.0) {
      acc = measures::dilate(k, c);
      continue;
    }
    if (grid.lambda_max < reach * (1.0 - 1e-12)) {
      std::ostringstream msg;
      msg << "fold_kernels: grid ends at " << grid.lambda_max << " but the kernel supports reach " << reach;
      throw DomainError(msg.str());
    }
    auto result = free_mult_conv_detailed(k, acc, grid, epsilon, options);
    if (diagnostics) {
      if (diagnostics->empty()) {
        for (const auto& p : result.points) diagnostics->push_back({p.z.real(), 0.0, 0});
      }
      for (std::size_t i = 0; i < result.points.size(); ++i) {
        auto& d = (*diagnostics)[i];
        d.residual = std::max(d.residual, result.points[i].residual);
        d.iterations += result.points[i].iterations;
      }
    }
    acc = std::move(result.density);
  }
  return acc;
}

DepthSpectrum depth_spectrum(const net::Nonlinearity& phi, double q0, double sigma_b2, std::size_t depth,
                             const UniformGrid& grid, double epsilon, const TheoryOptions& options) {
  if (depth < 1) throw DomainError("depth_spectrum: depth must be >= 1");
  const auto gh = QuadratureRule::gauss_hermite(options.quadrature_order);
  const auto atoms = QuadratureRule::gaussian_quantiles(options.kernel_atoms);
  DepthSpectrum out{q_recursion(phi, q0, sigma_b2, depth, gh, options.convention), {},
                    SpectralMeasure::point_mass(1.0), {}};
  for (std::size_t l = 1; l <= depth; ++l) {
    out.layer_kernels.push_back(nu_K(phi, out.profile.values[l - 1], atoms));
  }
  out.spectrum = fold_kernels(out.layer_kernels, grid, epsilon, options.solver, &out.diagnostics);
  return out;
}

namespace {

// Principal power; a real negative base takes arg = +π.
Complex branch_pow(Complex x, double a) {
  if (x.imag() == 0.0) x = Complex(x.real(), 0.0);  // drop -0.0
  if (x == Complex(0.0, 0.0)) return 0.0;
  return std::polar(std::pow(std::abs(x), a), a * std::arg(x));
}

}  // namespace

Complex master_equation(const std::function<Complex(Complex)>& m_k, std::size_t depth, Complex z, double tolerance,
                        std::size_t max_iter) {
  if (depth < 1) throw DomainError("master_equation: depth must be >= 1");
  if (!finite(z)) throw DomainError("master_equation: z must be finite");
  if (z.imag() == 0.0) z = Complex(z.real(), 0.0);
  if (z == Complex(0.0, 0.0)) return 0.0;
  if (depth == 1) return m_k(z);
  const double gap = std::numbers::pi - std::abs(std::arg(z));
  if (z.imag() != 0.0 && gap < 1e-3) {
    throw DomainError("master_equation: arg z is within 1e-3 of pi off the real axis; branch is ambiguous");
  }
  const double l = static_cast<double>(depth);
  const Complex zl = branch_pow(z, 1.0 / l);
  auto defect = [&](Complex m) { return m_k(zl * branch_pow(m / (1.0 + m), 1.0 - 1.0 / l)) - m; };

  std::vector<double> trajectory;
  Complex m_prev = m_k(z);
  Complex f_prev = defect(m_prev);
  Complex m = m_prev + f_prev;
  double damping = 1.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    const Complex f = defect(m);
    const double fn = std::abs(f);
    trajectory.push_back(fn);
    if (fn <= tolerance * std::max(1.0, std::abs(m))) return m;
    Complex next = m - f * (m - m_prev) / (f - f_prev);
    if (!finite(next) || !finite(defect(next)) || std::abs(defect(next)) >= fn) {
      next = m + damping * f;
      damping = std::max(0.5 * damping, 1e-3);
    }
    m_prev = m;
    f_prev = f;
    m = next;
    if (!finite(m)) break;
  }
  throw ConvergenceError("master_equation: no convergence", std::move(trajectory));
}

IsometryMetrics isometry_metrics(const SpectralMeasure& mu) {
  IsometryMetrics out;
  out.mean_sv = measures::expectation(mu, [](double x) { return std::sqrt(std::max(0.0, x)); });
  out.var_sv = std::max(0.0, measures::moment(mu, 1) - out.mean_sv * out.mean_sv);
  out.mass_within = mu.cdf(4.0) - mu.cdf_left(0.25);
  return out;
}

}  // namespace jacspec::freeconv
