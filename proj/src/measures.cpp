#include "jacspec/measures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>

#include "jacspec/error.hpp"

namespace jacspec::measures {
namespace {

constexpr double kMassTolerance = 1e-9;
constexpr double kAxisTolerance = 1e-12;
constexpr double kClampThreshold = -1e-10;

// 3-point Gauss-Legendre on [-1, 1].
constexpr std::array<double, 3> kGlNodes = {-0.7745966692414834, 0.0, 0.7745966692414834};
constexpr std::array<double, 3> kGlWeights = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

void check_off_half_line(Complex z, const char* op) {
  if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
    throw DomainError(std::string(op) + ": non-finite argument");
  }
  if (std::abs(z.imag()) <= kAxisTolerance && z.real() >= -kAxisTolerance) {
    throw DomainError(std::string(op) + ": z = " + std::to_string(z.real()) + " lies on [0, inf)");
  }
}

double trapezoid_mass(const std::vector<double>& grid, const std::vector<double>& values) {
  double mass = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    mass += 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
  }
  return mass;
}

template <class Fn>
double grid_integral(const GridDensity& g, Fn&& fn) {
  double total = 0.0;
  for (std::size_t i = 1; i < g.grid.size(); ++i) {
    const double a = g.grid[i - 1], b = g.grid[i];
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    const double slope = (g.values[i] - g.values[i - 1]) / (b - a);
    double cell = 0.0;
    for (std::size_t k = 0; k < kGlNodes.size(); ++k) {
      const double x = mid + half * kGlNodes[k];
      cell += kGlWeights[k] * fn(x) * (g.values[i - 1] + slope * (x - a));
    }
    total += half * cell;
  }
  return total;
}

// Exact ∫_a^b ρ(λ)/(λ - z) dλ and its z-derivative for linear ρ on [a, b].
void linear_cell_stieltjes(double a, double b, double ra, double rb, Complex z, Complex* value,
                           Complex* derivative) {
  const double slope = (rb - ra) / (b - a);
  const double h = b - a;
  const Complex d = a - z;
  if (std::abs(d) > 20.0 * h) {
    // Far from the cell the closed form below cancels; expand 1/(d + s) in
    // s/d instead, with 14 terms for |h/d| < 1/20.
    const Complex r = -h / d;
    Complex rk = 1.0;  // (-h/d)^k
    Complex v = 0.0, dv = 0.0;
    for (int k = 0; k < 14; ++k) {
      const Complex cell = ra * h / (k + 1.0) + slope * h * h / (k + 2.0);
      v += rk * cell;
      dv += (k + 1.0) * rk * cell;
      rk *= r;
    }
    if (value) *value += v / d;
    if (derivative) *derivative += dv / (d * d);
    return;
  }
  const Complex rho_z = ra + slope * (z - a);
  const Complex log_ratio = std::log((b - z) / (a - z));
  if (value) *value += rho_z * log_ratio + slope * (b - a);
  if (derivative) *derivative += rho_z * (1.0 / (a - z) - 1.0 / (b - z)) + slope * log_ratio;
}

// Cumulative distribution with prefix sums, built once per measure.
class CdfEvaluator {
 public:
  explicit CdfEvaluator(const SpectralMeasure& mu) : mu_(mu) {
    if (const auto* at = mu.as_atomic()) {
      prefix_.resize(at->weights.size() + 1, 0.0);
      for (std::size_t i = 0; i < at->weights.size(); ++i) prefix_[i + 1] = prefix_[i] + at->weights[i];
    } else if (const auto* g = mu.as_grid()) {
      prefix_.resize(g->grid.size(), 0.0);
      for (std::size_t i = 1; i < g->grid.size(); ++i) {
        prefix_[i] = prefix_[i - 1] + 0.5 * (g->values[i] + g->values[i - 1]) * (g->grid[i] - g->grid[i - 1]);
      }
    }
  }

  double at(double x, bool left) const {
    if (const auto* at = mu_.as_atomic()) {
      const auto& p = at->positions;
      const auto it = left ? std::lower_bound(p.begin(), p.end(), x) : std::upper_bound(p.begin(), p.end(), x);
      return std::min(1.0, prefix_[static_cast<std::size_t>(it - p.begin())]);
    }
    if (const auto* em = mu_.as_empirical()) {
      const auto& e = em->eigenvalues;
      const auto it = left ? std::lower_bound(e.begin(), e.end(), x) : std::upper_bound(e.begin(), e.end(), x);
      return static_cast<double>(it - e.begin()) / static_cast<double>(e.size());
    }
    const auto& g = *mu_.as_grid();
    double atom = 0.0;
    if (g.zero_atom > 0.0 && (left ? x > 0.0 : x >= 0.0)) atom = g.zero_atom;
    if (x <= g.grid.front()) return atom;
    if (x >= g.grid.back()) return std::min(1.0, atom + prefix_.back());
    const auto i = static_cast<std::size_t>(std::upper_bound(g.grid.begin(), g.grid.end(), x) - g.grid.begin()) - 1;
    const double a = g.grid[i], b = g.grid[i + 1];
    const double slope = (g.values[i + 1] - g.values[i]) / (b - a);
    const double dx = x - a;
    return std::min(1.0, atom + prefix_[i] + dx * (g.values[i] + 0.5 * slope * dx));
  }

 private:
  const SpectralMeasure& mu_;
  std::vector<double> prefix_;
};

}  // namespace

double UniformGrid::node(std::size_t i) const {
  if (i + 1 == points) return lambda_max;
  return lambda_min + static_cast<double>(i) * spacing();
}

std::vector<double> UniformGrid::nodes() const {
  std::vector<double> out(points);
  for (std::size_t i = 0; i < points; ++i) out[i] = node(i);
  return out;
}

void UniformGrid::validate() const {
  if (points < 2) throw DomainError("grid needs at least 2 points");
  if (!std::isfinite(lambda_min) || !std::isfinite(lambda_max) || lambda_min < 0.0 ||
      !(lambda_max > lambda_min)) {
    throw DomainError("grid must satisfy 0 <= lambda_min < lambda_max");
  }
}

SpectralMeasure SpectralMeasure::atomic(std::vector<double> positions, std::vector<double> weights) {
  if (positions.empty() || positions.size() != weights.size()) {
    throw DomainError("atomic measure: positions and weights must be non-empty and equal length");
  }
  std::vector<std::size_t> order(positions.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return positions[a] < positions[b]; });

  Atomic out;
  double mass = 0.0;
  for (const std::size_t i : order) {
    double x = positions[i];
    const double w = weights[i];
    if (!std::isfinite(x) || !std::isfinite(w)) throw DomainError("atomic measure: non-finite atom");
    if (x < 0.0) {
      if (x < kClampThreshold) throw DomainError("atomic measure: negative position " + std::to_string(x));
      x = 0.0;
    }
    if (w < 0.0) throw DomainError("atomic measure: negative weight");
    if (w == 0.0) continue;
    mass += w;
    if (!out.positions.empty() && x - out.positions.back() <= 1e-12) {
      out.weights.back() += w;
    } else {
      out.positions.push_back(x);
      out.weights.push_back(w);
    }
  }
  if (std::abs(mass - 1.0) > kMassTolerance) {
    throw DomainError("atomic measure: total mass " + std::to_string(mass) + " != 1");
  }
  for (auto& w : out.weights) w /= mass;
  return SpectralMeasure(std::move(out));
}

SpectralMeasure SpectralMeasure::point_mass(double c) { return atomic({c}, {1.0}); }

SpectralMeasure SpectralMeasure::grid_density(std::vector<double> grid, std::vector<double> values,
                                              double zero_atom) {
  if (grid.size() < 2 || grid.size() != values.size()) {
    throw DomainError("grid density: need >= 2 nodes and matching values");
  }
  if (!(grid.front() >= 0.0)) throw DomainError("grid density: grid must be nonnegative");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw DomainError("grid density: grid must be strictly increasing");
  }
  for (const double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("grid density: densities must be finite and >= 0");
  }
  if (!(zero_atom >= 0.0 && zero_atom <= 1.0)) throw DomainError("grid density: zero atom outside [0, 1]");
  const double mass = zero_atom + trapezoid_mass(grid, values);
  if (std::abs(mass - 1.0) > kMassTolerance) {
    throw DomainError("grid density: total mass " + std::to_string(mass) + " != 1");
  }
  return SpectralMeasure(GridDensity{std::move(grid), std::move(values), zero_atom});
}

SpectralMeasure SpectralMeasure::empirical(std::vector<double> eigenvalues) {
  if (eigenvalues.empty()) throw DomainError("empirical measure: no eigenvalues");
  for (auto& x : eigenvalues) {
    if (!std::isfinite(x)) throw DomainError("empirical measure: non-finite eigenvalue");
    if (x < 0.0) {
      if (x < kClampThreshold) throw DomainError("empirical measure: negative eigenvalue " + std::to_string(x));
      x = 0.0;
    }
  }
  std::sort(eigenvalues.begin(), eigenvalues.end());
  return SpectralMeasure(Empirical{std::move(eigenvalues)});
}

double SpectralMeasure::support_max() const {
  if (const auto* at = as_atomic()) return at->positions.back();
  if (const auto* em = as_empirical()) return em->eigenvalues.back();
  const auto& g = *as_grid();
  for (std::size_t i = g.values.size(); i-- > 0;) {
    if (g.values[i] > 0.0) return g.grid[i];
  }
  return 0.0;
}

double SpectralMeasure::mass_at_zero() const {
  if (const auto* at = as_atomic()) return at->positions.front() == 0.0 ? at->weights.front() : 0.0;
  if (const auto* em = as_empirical()) {
    const auto& e = em->eigenvalues;
    const auto zeros = std::upper_bound(e.begin(), e.end(), 0.0) - e.begin();
    return static_cast<double>(zeros) / static_cast<double>(e.size());
  }
  return as_grid()->zero_atom;
}

bool SpectralMeasure::is_point_mass(double* where) const {
  double pos = 0.0;
  bool single = false;
  if (const auto* at = as_atomic()) {
    single = at->positions.size() == 1;
    pos = at->positions.front();
  } else if (const auto* em = as_empirical()) {
    single = em->eigenvalues.front() == em->eigenvalues.back();
    pos = em->eigenvalues.front();
  } else {
    single = as_grid()->zero_atom == 1.0;
  }
  if (single && where) *where = pos;
  return single;
}

double SpectralMeasure::cdf(double x) const { return CdfEvaluator(*this).at(x, false); }
double SpectralMeasure::cdf_left(double x) const { return CdfEvaluator(*this).at(x, true); }

Complex stieltjes(const SpectralMeasure& mu, Complex z) {
  check_off_half_line(z, "stieltjes");
  Complex sum = 0.0;
  if (const auto* at = mu.as_atomic()) {
    for (std::size_t i = 0; i < at->positions.size(); ++i) sum += at->weights[i] / (at->positions[i] - z);
    return sum;
  }
  if (const auto* em = mu.as_empirical()) {
    for (const double x : em->eigenvalues) sum += 1.0 / (x - z);
    return sum / static_cast<double>(em->eigenvalues.size());
  }
  const auto& g = *mu.as_grid();
  if (g.zero_atom > 0.0) sum += g.zero_atom / (-z);
  for (std::size_t i = 1; i < g.grid.size(); ++i) {
    linear_cell_stieltjes(g.grid[i - 1], g.grid[i], g.values[i - 1], g.values[i], z, &sum, nullptr);
  }
  return sum;
}

Complex stieltjes_derivative(const SpectralMeasure& mu, Complex z) {
  check_off_half_line(z, "stieltjes_derivative");
  Complex sum = 0.0;
  if (const auto* at = mu.as_atomic()) {
    for (std::size_t i = 0; i < at->positions.size(); ++i) {
      const Complex d = 1.0 / (at->positions[i] - z);
      sum += at->weights[i] * d * d;
    }
    return sum;
  }
  if (const auto* em = mu.as_empirical()) {
    for (const double x : em->eigenvalues) {
      const Complex d = 1.0 / (x - z);
      sum += d * d;
    }
    return sum / static_cast<double>(em->eigenvalues.size());
  }
  const auto& g = *mu.as_grid();
  if (g.zero_atom > 0.0) sum += g.zero_atom / (z * z);
  for (std::size_t i = 1; i < g.grid.size(); ++i) {
    linear_cell_stieltjes(g.grid[i - 1], g.grid[i], g.values[i - 1], g.values[i], z, nullptr, &sum);
  }
  return sum;
}

Complex mgf(const SpectralMeasure& mu, Complex w) {
  if (w == Complex(0.0, 0.0)) return 0.0;
  const bool real_positive = w.imag() == 0.0 && w.real() > 0.0;
  if (real_positive && !(w.real() * mu.support_max() < 1.0)) {
    throw DomainError("mgf: 1/w = " + std::to_string(1.0 / w.real()) + " lies inside the support");
  }
  const auto term = [w](double x) { return w * x / (1.0 - w * x); };
  if (const auto* at = mu.as_atomic()) {
    Complex sum = 0.0;
    for (std::size_t i = 0; i < at->positions.size(); ++i) sum += at->weights[i] * term(at->positions[i]);
    return sum;
  }
  if (const auto* em = mu.as_empirical()) {
    Complex sum = 0.0;
    for (const double x : em->eigenvalues) sum += term(x);
    return sum / static_cast<double>(em->eigenvalues.size());
  }
  if (real_positive) {
    const double wr = w.real();
    return expectation(mu, [wr](double x) { return wr * x / (1.0 - wr * x); });
  }
  return -1.0 - stieltjes(mu, 1.0 / w) / w;
}

double moment(const SpectralMeasure& mu, int k) {
  if (k < 1) throw DomainError("moment: k must be >= 1");
  return expectation(mu, [k](double x) { return std::pow(x, k); });
}

double expectation(const SpectralMeasure& mu, const std::function<double(double)>& g) {
  if (const auto* at = mu.as_atomic()) {
    double sum = 0.0;
    for (std::size_t i = 0; i < at->positions.size(); ++i) sum += at->weights[i] * g(at->positions[i]);
    return sum;
  }
  if (const auto* em = mu.as_empirical()) {
    double sum = 0.0;
    for (const double x : em->eigenvalues) sum += g(x);
    return sum / static_cast<double>(em->eigenvalues.size());
  }
  const auto& grid = *mu.as_grid();
  double sum = grid_integral(grid, g);
  if (grid.zero_atom > 0.0) sum += grid.zero_atom * g(0.0);
  return sum;
}

RealMgf real_mgf(const SpectralMeasure& mu) {
  RealMgf out;
  const double top = mu.support_max();
  out.pole = top > 0.0 ? 1.0 / top : std::numeric_limits<double>::infinity();
  auto held = std::make_shared<const SpectralMeasure>(mu);
  out.value = [held](double w) { return mgf(*held, Complex(w, 0.0)).real(); };
  if (mu.as_grid()) {
    out.derivative = [held](double w) {
      const SpectralMeasure& mu = *held;
      if (w == 0.0) return moment(mu, 1);
      if (w > 0.0) {
        return expectation(mu, [w](double x) { return x / ((1.0 - w * x) * (1.0 - w * x)); });
      }
      const Complex z(1.0 / w, 0.0);
      return (stieltjes(mu, z) / (w * w) + stieltjes_derivative(mu, z) / (w * w * w)).real();
    };
  } else {
    out.derivative = [held](double w) {
      return expectation(*held, [w](double x) { return x / ((1.0 - w * x) * (1.0 - w * x)); });
    };
  }
  return out;
}

namespace {

double scan_base(const RealMgf& fn) { return std::isfinite(fn.pole) ? fn.pole : 1.0; }

// Walks w = -base·2^k outwards; returns the smallest m seen while m stayed
// strictly decreasing, optionally stopping at the first w with m(w) < target.
// Starts near |w|·support = 1e-3: closer to 0 the grid-density path
// -1 - f(1/w)/w loses all digits to cancellation.
double scan_negative(const RealMgf& fn, double target, double* bracket_w) {
  const double base = scan_base(fn);
  double best = 0.0;
  for (int k = -10; k <= 80; ++k) {
    const double w = -std::ldexp(base, k);
    const double m = fn.value(w);
    if (!std::isfinite(m) || !(m < best)) break;
    best = m;
    if (bracket_w && m < target) {
      *bracket_w = w;
      return best;
    }
  }
  return best;
}

double scan_positive(const RealMgf& fn, double target, double* bracket_w) {
  double best = 0.0;
  if (!std::isfinite(fn.pole)) return best;
  for (int k = 1; k <= 52; ++k) {
    const double w = fn.pole * (1.0 - std::ldexp(1.0, -k));
    const double m = fn.value(w);
    if (!std::isfinite(m) || !(m > best)) break;
    best = m;
    if (bracket_w && m > target) {
      *bracket_w = w;
      return best;
    }
  }
  return best;
}

}  // namespace

InvertibilityWindow invertibility_window(const RealMgf& fn) {
  return {scan_negative(fn, -std::numeric_limits<double>::infinity(), nullptr),
          scan_positive(fn, std::numeric_limits<double>::infinity(), nullptr)};
}

double inverse_mgf(const RealMgf& fn, double m) {
  if (!std::isfinite(m)) throw DomainError("inverse_mgf: non-finite target");
  if (m == 0.0) return 0.0;
  double lo = 0.0, hi = 0.0;
  double edge = std::numeric_limits<double>::quiet_NaN();
  if (m < 0.0) {
    scan_negative(fn, m, &edge);
    lo = edge;
  } else {
    scan_positive(fn, m, &edge);
    hi = edge;
  }
  if (std::isnan(edge)) {
    const auto window = invertibility_window(fn);
    throw RangeError("inverse_mgf: m = " + std::to_string(m) + " outside invertibility window (" +
                         std::to_string(window.lower) + ", " + std::to_string(window.upper) + ")",
                     window.lower, window.upper);
  }

  // Safeguarded Newton (secant without a derivative) on f(lo) < 0 < f(hi).
  double f_lo = fn.value(lo) - m, f_hi = fn.value(hi) - m;
  double w = m < 0.0 ? hi : lo;
  double fw = m < 0.0 ? f_hi : f_lo;
  double prev_w = m < 0.0 ? lo : hi;
  double prev_f = m < 0.0 ? f_lo : f_hi;
  for (int it = 0; it < 300; ++it) {
    if (std::abs(fw) < 1e-14) return w;
    double slope = 0.0;
    if (fn.derivative) {
      slope = fn.derivative(w);
    } else if (w != prev_w) {
      slope = (fw - prev_f) / (w - prev_w);
    }
    double next = slope > 0.0 ? w - fw / slope : std::numeric_limits<double>::quiet_NaN();
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    prev_w = w;
    prev_f = fw;
    w = next;
    fw = fn.value(w) - m;
    if (fw < 0.0) {
      lo = w;
      f_lo = fw;
    } else {
      hi = w;
      f_hi = fw;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi))) break;
  }
  const double best = std::abs(f_lo) < std::abs(f_hi) ? lo : hi;
  const double residual = std::min(std::abs(f_lo), std::abs(f_hi));
  if (residual >= 1e-12) {
    throw ConvergenceError("inverse_mgf: residual " + std::to_string(residual) + " above 1e-12");
  }
  return best;
}

double inverse_mgf(const SpectralMeasure& mu, double m) { return inverse_mgf(real_mgf(mu), m); }

double s_transform(const RealMgf& fn, double m) {
  if (m == 0.0 || m == -1.0) throw DomainError("s_transform: m must differ from 0 and -1");
  return inverse_mgf(fn, m) * (m + 1.0) / m;
}

double s_transform(const SpectralMeasure& mu, double m) { return s_transform(real_mgf(mu), m); }

std::vector<HerglotzSample> sample_stieltjes(const SpectralMeasure& mu, const UniformGrid& grid,
                                             double epsilon) {
  grid.validate();
  if (!(epsilon > 0.0)) throw DomainError("sample_stieltjes: epsilon must be > 0");
  std::vector<HerglotzSample> out(grid.points);
  for (std::size_t i = 0; i < grid.points; ++i) {
    const Complex z(grid.node(i), epsilon);
    out[i] = {z, stieltjes(mu, z)};
  }
  return out;
}

std::vector<double> perron_density(std::span<const HerglotzSample> samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.f.imag() / M_PI);
  return out;
}

SpectralMeasure stieltjes_inversion(std::span<const HerglotzSample> samples, double zero_atom) {
  if (samples.size() < 2) throw DomainError("stieltjes_inversion: need >= 2 samples");
  if (!(zero_atom >= 0.0 && zero_atom < 1.0)) throw DomainError("stieltjes_inversion: zero atom outside [0, 1)");
  const double eps = samples.front().z.imag();
  if (!(eps > 0.0)) throw DomainError("stieltjes_inversion: epsilon must be > 0");
  const double spacing =
      (samples.back().z.real() - samples.front().z.real()) / static_cast<double>(samples.size() - 1);
  if (!(spacing > 0.0)) throw DomainError("stieltjes_inversion: grid must be increasing");
  if (samples.front().z.real() < -kAxisTolerance) throw DomainError("stieltjes_inversion: grid must be >= 0");

  std::vector<double> grid(samples.size()), rho(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (std::abs(s.z.imag() - eps) > 1e-12 * eps) throw DomainError("stieltjes_inversion: epsilon must be uniform");
    if (i > 0 && std::abs((s.z.real() - samples[i - 1].z.real()) - spacing) > 1e-6 * spacing) {
      throw DomainError("stieltjes_inversion: grid must be uniform");
    }
    grid[i] = std::max(0.0, s.z.real());
    const Complex continuous = s.f + zero_atom / s.z;
    rho[i] = std::max(0.0, continuous.imag() / M_PI);
  }
  const double target = 1.0 - zero_atom;
  const double mass = trapezoid_mass(grid, rho);
  const double drift = std::abs(mass - target);
  if (!(drift < 1e-2)) {
    throw InversionError("stieltjes_inversion: mass drift " + std::to_string(drift) +
                             " >= 1e-2; widen the grid or reduce epsilon",
                         drift);
  }
  for (auto& r : rho) r *= target / mass;
  return SpectralMeasure::grid_density(std::move(grid), std::move(rho), zero_atom);
}

double ks_distance(const SpectralMeasure& a, const SpectralMeasure& b) {
  std::vector<double> points;
  const auto collect = [&points](const SpectralMeasure& mu) {
    if (const auto* at = mu.as_atomic()) {
      points.insert(points.end(), at->positions.begin(), at->positions.end());
    } else if (const auto* em = mu.as_empirical()) {
      points.insert(points.end(), em->eigenvalues.begin(), em->eigenvalues.end());
    } else {
      const auto& g = *mu.as_grid();
      points.insert(points.end(), g.grid.begin(), g.grid.end());
      if (g.zero_atom > 0.0) points.push_back(0.0);
    }
  };
  collect(a);
  collect(b);
  std::sort(points.begin(), points.end());

  const CdfEvaluator fa(a), fb(b);
  double sup = 0.0;
  std::size_t i = 0;
  while (i < points.size()) {
    const double lo = points[i];
    std::size_t j = i;
    while (j + 1 < points.size() && points[j + 1] - points[j] <= 1e-12 * std::max(1.0, std::abs(points[j]))) ++j;
    const double hi = points[j];
    sup = std::max(sup, std::abs(fa.at(hi, false) - fb.at(hi, false)));
    sup = std::max(sup, std::abs(fa.at(lo, true) - fb.at(lo, true)));
    i = j + 1;
  }
  return std::clamp(sup, 0.0, 1.0);
}

double ks_two_sample_pvalue(double d, std::size_t n1, std::size_t n2) {
  if (n1 == 0 || n2 == 0) throw DomainError("ks_two_sample_pvalue: empty sample");
  const double ne = static_cast<double>(n1) * static_cast<double>(n2) / static_cast<double>(n1 + n2);
  const double root = std::sqrt(ne);
  const double lambda = (root + 0.12 + 0.11 / root) * d;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0, sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

SpectralMeasure dilate(const SpectralMeasure& mu, double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("dilate: factor must be positive and finite");
  if (const auto* at = mu.as_atomic()) {
    auto pos = at->positions;
    for (auto& x : pos) x *= c;
    return SpectralMeasure::atomic(std::move(pos), at->weights);
  }
  if (const auto* em = mu.as_empirical()) {
    auto ev = em->eigenvalues;
    for (auto& x : ev) x *= c;
    return SpectralMeasure::empirical(std::move(ev));
  }
  const auto& g = *mu.as_grid();
  auto grid = g.grid;
  auto values = g.values;
  for (auto& x : grid) x *= c;
  for (auto& v : values) v /= c;
  return SpectralMeasure::grid_density(std::move(grid), std::move(values), g.zero_atom);
}

}  // namespace jacspec::measures
