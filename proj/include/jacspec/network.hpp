#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "jacspec/measures.hpp"
#include "jacspec/rng.hpp"

namespace jacspec::net {

enum class NonlinearityKind { kHardTanh, kSin, kScaledErf };

/**
 * Bounded activation with bounded derivative.
 *
 *   hardtanh:g   φ(x) = clamp(gx, -1, 1), φ'(x) = g for |gx| < 1, else 0
 *   sin:g        φ(x) = sin(gx)
 *   erf:g        φ(x) = erf(gx·√π/2), so φ'(0) = g
 *
 * All three have sup|φ| = 1 and sup|φ'| = g.
 */
class Nonlinearity {
 public:
  Nonlinearity() = default;
  Nonlinearity(NonlinearityKind kind, double gain);

  /// Parses "<name>:<gain>" with name in {hardtanh, sin, erf}.
  static Nonlinearity parse(const std::string& id);

  double value(double x) const;
  double derivative(double x) const;
  double sup_value() const { return 1.0; }
  double sup_derivative() const { return gain_; }

  NonlinearityKind kind() const { return kind_; }
  double gain() const { return gain_; }
  std::string id() const;

 private:
  NonlinearityKind kind_ = NonlinearityKind::kSin;
  double gain_ = 1.0;
};

struct ConstantNorm {
  double q0 = 1.0;  // ‖x⁰‖²/n + σ_b²
};
struct ExplicitVector {
  std::vector<double> values;
};
struct IidFromSeed {
  double variance = 1.0;  // per-entry variance of x⁰
};
using InputSpec = std::variant<ConstantNorm, ExplicitVector, IidFromSeed>;

struct NetworkConfig {
  std::size_t depth = 1;
  std::size_t width = 1;
  double sigma_b2 = 0.0;
  Nonlinearity phi;
  InputSpec input = ConstantNorm{};
  rng::RngSeed seed;

  /// Throws ConfigError with the offending field.
  void validate() const;
};

/// ConstantNorm produces the constant vector with ‖x⁰‖² = n(q⁰ - σ_b²).
Eigen::VectorXd make_input(const NetworkConfig& config, rng::Generator& gen);

/// ‖x‖²/n + σ_b².
double layer_q(const Eigen::VectorXd& x, double sigma_b2);

struct LayerTrace {
  rng::OrthogonalMatrix weight;
  Eigen::VectorXd bias;
  Eigen::VectorXd pre_activation;  // y^l = O^l x^{l-1} + b^l
  Eigen::VectorXd activation;      // x^l = φ(y^l)
  Eigen::VectorXd derivative;      // D^l = φ'(y^l)
  double q = 0.0;                  // ‖x^l‖²/n + σ_b²
};

struct ForwardTrace {
  Eigen::VectorXd input;
  double q0 = 0.0;
  std::vector<LayerTrace> layers;
};

/// Samples the input, then O^l and b^l layer by layer from the config seed.
ForwardTrace forward_pass(const NetworkConfig& config);

/// Deterministic pass with injected weights and biases.
ForwardTrace forward_pass(const Nonlinearity& phi, double sigma_b2, const Eigen::VectorXd& input,
                          std::span<const rng::OrthogonalMatrix> weights,
                          std::span<const Eigen::VectorXd> biases);

/// J = D^L O^L ⋯ D^1 O^1.
Eigen::MatrixXd assemble_jacobian(const ForwardTrace& trace);

/// M = JJᵀ, symmetrised.
Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& jacobian);

struct EmpiricalSpectrum {
  std::vector<double> eigenvalues;  // ascending, >= 0
  std::size_t n = 0;

  measures::SpectralMeasure to_measure() const { return measures::SpectralMeasure::empirical(eigenvalues); }
};

/// All eigenvalues of a symmetric PSD matrix. Throws DomainError when the
/// matrix is asymmetric beyond 1e-8 or has an eigenvalue below -1e-10.
EmpiricalSpectrum empirical_ncm(const Eigen::MatrixXd& m);

/// forward_pass → assemble_jacobian → gram_matrix → empirical_ncm.
EmpiricalSpectrum jacobian_spectrum(const NetworkConfig& config);

}  // namespace jacspec::net
