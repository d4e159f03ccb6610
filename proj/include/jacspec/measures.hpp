#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <variant>
#include <vector>

namespace jacspec::measures {

using Complex = std::complex<double>;

/// Evenly spaced λ-grid [lambda_min, lambda_max] with `points` nodes.
struct UniformGrid {
  double lambda_min = 0.0;
  double lambda_max = 1.0;
  std::size_t points = 2;

  double spacing() const { return (lambda_max - lambda_min) / static_cast<double>(points - 1); }
  double node(std::size_t i) const;
  std::vector<double> nodes() const;
  /// Throws DomainError unless points >= 2 and 0 <= lambda_min < lambda_max.
  void validate() const;
};

struct Atomic {
  std::vector<double> positions;  // strictly increasing, >= 0
  std::vector<double> weights;    // > 0, summing to 1
};

/// Piecewise-linear density on a grid, plus an optional point mass at 0
/// (needed for kernels with a saturated derivative). zero_atom + ∫ρ = 1.
struct GridDensity {
  std::vector<double> grid;
  std::vector<double> values;
  double zero_atom = 0.0;
};

struct Empirical {
  std::vector<double> eigenvalues;  // sorted, >= 0
};

/**
 * Probability measure on [0, ∞). Immutable once built; the factories check
 * the invariants (unit mass within 1e-9, nonnegative support).
 */
class SpectralMeasure {
 public:
  using Representation = std::variant<Atomic, GridDensity, Empirical>;

  /// Sorts atoms and merges positions equal to within 1e-12.
  static SpectralMeasure atomic(std::vector<double> positions, std::vector<double> weights);
  static SpectralMeasure point_mass(double c);
  static SpectralMeasure grid_density(std::vector<double> grid, std::vector<double> values,
                                      double zero_atom = 0.0);
  /// Entries in [-1e-10, 0) are clamped to 0; anything more negative throws.
  static SpectralMeasure empirical(std::vector<double> eigenvalues);

  const Representation& representation() const { return rep_; }
  const Atomic* as_atomic() const { return std::get_if<Atomic>(&rep_); }
  const GridDensity* as_grid() const { return std::get_if<GridDensity>(&rep_); }
  const Empirical* as_empirical() const { return std::get_if<Empirical>(&rep_); }

  /// Largest point of the support (last grid node for densities).
  double support_max() const;
  /// Mass of the atom at exactly 0.
  double mass_at_zero() const;
  /// True when the measure is a single point mass; `*where` receives it.
  bool is_point_mass(double* where = nullptr) const;

  /// μ((-∞, x]).
  double cdf(double x) const;
  /// μ((-∞, x)).
  double cdf_left(double x) const;

 private:
  explicit SpectralMeasure(Representation rep) : rep_(std::move(rep)) {}
  Representation rep_;
};

/// f(z) = ∫ (λ - z)⁻¹ dμ(λ). Throws DomainError for z within 1e-12 of [0, ∞).
Complex stieltjes(const SpectralMeasure& mu, Complex z);
/// f'(z) = ∫ (λ - z)⁻² dμ(λ).
Complex stieltjes_derivative(const SpectralMeasure& mu, Complex z);

/// m(w) = Σ_k m_k w^k, evaluated as -1 - f(1/w)/w (direct sum on the real
/// segment 0 < w < 1/max supp, where 1/w lies beyond the support).
Complex mgf(const SpectralMeasure& mu, Complex w);
double moment(const SpectralMeasure& mu, int k);
/// ∫ g dμ. Grid densities use 3-point Gauss-Legendre on each cell.
double expectation(const SpectralMeasure& mu, const std::function<double(double)>& g);

/// Real-axis restriction of a moment generating function, for inversion.
struct RealMgf {
  std::function<double(double)> value;
  /// Optional; the inverter falls back to secant steps without it.
  std::function<double(double)> derivative;
  /// m is analytic and increasing on (-∞, pole). Use 1/max supp.
  double pole = 1.0;
};

RealMgf real_mgf(const SpectralMeasure& mu);

struct InvertibilityWindow {
  double lower = 0.0;
  double upper = 0.0;
};

/// Range of m over which the real mgf was found strictly monotone.
InvertibilityWindow invertibility_window(const RealMgf& m);

/// w with mgf(w) = m to 1e-12, by safeguarded Newton with bisection.
/// Throws RangeError carrying the window when m is outside it.
double inverse_mgf(const RealMgf& mgf_fn, double m);
double inverse_mgf(const SpectralMeasure& mu, double m);

/// S(m) = z(m)(m + 1)/m.
double s_transform(const RealMgf& mgf_fn, double m);
double s_transform(const SpectralMeasure& mu, double m);

struct HerglotzSample {
  Complex z;
  Complex f;
};

/// Samples f(λ_i + iε) of a known measure on the grid.
std::vector<HerglotzSample> sample_stieltjes(const SpectralMeasure& mu, const UniformGrid& grid,
                                             double epsilon);

/// Raw Stieltjes-Perron densities Im f(λ_i + iε)/π, without normalisation.
std::vector<double> perron_density(std::span<const HerglotzSample> samples);

/**
 * Recovers a GridDensity from samples on a uniform grid with a single ε.
 * `zero_atom` is a known point mass at 0 whose contribution -a/z is removed
 * before inversion. The remaining density is rescaled to mass 1 - zero_atom
 * if its trapezoid mass drifted by less than 1e-2; otherwise InversionError.
 */
SpectralMeasure stieltjes_inversion(std::span<const HerglotzSample> samples, double zero_atom = 0.0);

/// sup |F_a - F_b| over the merged breakpoints of both measures. Breakpoints
/// closer than 1e-12 (relative) are treated as one point.
double ks_distance(const SpectralMeasure& a, const SpectralMeasure& b);

/// Asymptotic p-value of the two-sample KS statistic d for sizes n1, n2.
double ks_two_sample_pvalue(double d, std::size_t n1, std::size_t n2);

/// Pushforward under λ ↦ cλ.
SpectralMeasure dilate(const SpectralMeasure& mu, double c);

}  // namespace jacspec::measures
