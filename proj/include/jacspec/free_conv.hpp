#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "jacspec/measures.hpp"
#include "jacspec/network.hpp"

namespace jacspec::freeconv {

using measures::Complex;
using measures::SpectralMeasure;
using measures::UniformGrid;

/// Discrete approximation of the standard Gaussian: E g(γ) ≈ Σ w_i g(x_i).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;  // positive, sum to 1

  /// Gauss-Hermite rule for the weight e^{-x²/2}/√(2π).
  static QuadratureRule gauss_hermite(std::size_t order);
  /// Equal-weight midpoint quantiles Φ⁻¹((i + ½)/N), rescaled so that the
  /// second moment is exactly 1. Used for kernel spectra, where a Gauss rule
  /// would put too few atoms in the bulk.
  static QuadratureRule gaussian_quantiles(std::size_t count);

  double expect(const std::function<double(double)>& g) const;
};

enum class BiasConvention {
  kIncludeBias,  // q^l = E φ²(√q^{l-1} γ) + σ_b²   ("ql", default)
  kOmitBias,     // q^l = E φ²(√q^{l-1} γ)          ("qlql")
};

BiasConvention parse_bias_convention(const std::string& s);
const char* to_string(BiasConvention c);

struct QProfile {
  std::vector<double> values;  // q^0 .. q^L
  double sigma_b2 = 0.0;
  BiasConvention convention = BiasConvention::kIncludeBias;
};

QProfile q_recursion(const net::Nonlinearity& phi, double q0, double sigma_b2, std::size_t depth,
                     const QuadratureRule& quad, BiasConvention convention = BiasConvention::kIncludeBias);

/// Positive fixed point q* of the one-step recursion, by bisection.
/// Throws DomainError when the map has none (e.g. σ_b² = 0 and φ'(0) ≤ 1).
double q_fixed_point(const net::Nonlinearity& phi, double sigma_b2, const QuadratureRule& quad,
                     BiasConvention convention = BiasConvention::kIncludeBias);

/// Law of φ'(√q γ)², as atoms on the quadrature nodes.
SpectralMeasure nu_K(const net::Nonlinearity& phi, double q, const QuadratureRule& quad);

enum class RootPolicy {
  kHerglotz,
  kOpposite,  // test hook: picks the wrong root of the quadratic
};

struct FixedPointOptions {
  double damping = 0.5;
  std::size_t max_iter = 5000;
  double tolerance = 1e-10;
  /// Initial subordination point. Defaults to z.
  std::optional<Complex> warm_start;
  RootPolicy root_policy = RootPolicy::kHerglotz;
  /// Throw ConvergenceError when the residual exceeds the tolerance.
  bool enforce_tolerance = true;
};

/**
 * Solution of the functional system at one point z:
 *
 *   (1 + z f_M) f_M = h_K h_R
 *   h_K = f_R(z f_M / h_K)
 *   h_R = f_K(z f_M / h_R)
 *
 * The arguments w_R = z f_M / h_K and w_K = z f_M / h_R are the
 * subordination points.
 */
struct FixedPointSolution {
  Complex z;
  Complex f_m;
  Complex h_k;
  Complex h_r;
  Complex w_k;
  Complex w_r;
  double residual = 0.0;
  std::size_t iterations = 0;
  std::size_t projections = 0;
};

/// Requires Im z > 0, or z real and negative.
FixedPointSolution solve_fixed_point(const SpectralMeasure& nu_k, const SpectralMeasure& nu_r, Complex z,
                                     const FixedPointOptions& options = {});

struct ConvolutionResult {
  SpectralMeasure density;
  std::vector<FixedPointSolution> points;
  std::vector<std::size_t> failed;  // grid indices filled by interpolation
};

/// Density of ν_K ⊠ ν_R on the grid, at distance ε above the real axis.
ConvolutionResult free_mult_conv_detailed(const SpectralMeasure& nu_k, const SpectralMeasure& nu_r,
                                          const UniformGrid& grid, double epsilon,
                                          const FixedPointOptions& options = {});
SpectralMeasure free_mult_conv(const SpectralMeasure& nu_k, const SpectralMeasure& nu_r, const UniformGrid& grid,
                               double epsilon, const FixedPointOptions& options = {});

/// ε-smoothed density of a measure on the grid (Cauchy kernel).
SpectralMeasure smoothed(const SpectralMeasure& mu, const UniformGrid& grid, double epsilon);

struct TheoryOptions {
  std::size_t quadrature_order = 201;
  std::size_t kernel_atoms = 4000;
  BiasConvention convention = BiasConvention::kIncludeBias;
  FixedPointOptions solver;
};

struct PointDiagnostic {
  double lambda = 0.0;
  double residual = 0.0;
  std::size_t iterations = 0;
};

struct DepthSpectrum {
  QProfile profile;
  std::vector<SpectralMeasure> layer_kernels;  // ν_{K^1} .. ν_{K^L}
  /// Exact (atomic) when every fold reduces to a dilation, otherwise a grid
  /// density at the requested ε.
  SpectralMeasure spectrum;
  /// Worst residual and summed iterations over all folds, per grid node.
  /// Empty when no fold needed the solver.
  std::vector<PointDiagnostic> diagnostics;
};

/// ν_{K^L} ⊠ (… ⊠ (ν_{K^1} ⊠ δ₁)), folded from the inside out.
DepthSpectrum depth_spectrum(const net::Nonlinearity& phi, double q0, double sigma_b2, std::size_t depth,
                             const UniformGrid& grid, double epsilon, const TheoryOptions& options = {});

/// Folds given kernels the same way depth_spectrum does.
SpectralMeasure fold_kernels(const std::vector<SpectralMeasure>& kernels, const UniformGrid& grid, double epsilon,
                             const FixedPointOptions& options = {},
                             std::vector<PointDiagnostic>* diagnostics = nullptr);

/**
 * Moment generating function m of the depth-L spectrum when all layers
 * share the kernel with generating function m_K:
 *
 *   m = m_K(z^{1/L} (m / (1 + m))^{1 - 1/L})
 *
 * Principal branches. A z on the negative real axis takes arg z = π in both
 * powers so that their product stays real; z with arg within 1e-3 of ±π but
 * off the axis is refused.
 */
Complex master_equation(const std::function<Complex(Complex)>& m_k, std::size_t depth, Complex z,
                        double tolerance = 1e-13, std::size_t max_iter = 5000);

struct IsometryMetrics {
  double mean_sv = 0.0;      // E √λ
  double var_sv = 0.0;       // E λ - (E √λ)²
  double mass_within = 0.0;  // μ([1/4, 4])
};

IsometryMetrics isometry_metrics(const SpectralMeasure& mu);

}  // namespace jacspec::freeconv
