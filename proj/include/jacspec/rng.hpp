#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>

#include <Eigen/Dense>

namespace jacspec::rng {

struct RngSeed {
  std::uint64_t value = 0;
};

/// Seed of the `trial_index`-th independent Monte Carlo trial.
inline RngSeed trial_seed(RngSeed master, std::uint64_t trial_index) {
  return RngSeed{master.value + trial_index};
}

/**
 * xoshiro256++ engine, state initialised from the seed by SplitMix64.
 *
 * Gaussian variates use the Marsaglia polar method on 53-bit uniforms; the
 * second variate of each accepted pair is cached and returned by the next
 * call. The stream is a pure function of the seed and the call sequence, so
 * results are bit-identical on a given platform and compiler.
 */
class Generator {
 public:
  explicit Generator(RngSeed seed);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform01();
  /// Standard normal.
  double gaussian();

 private:
  std::array<std::uint64_t, 4> state_{};
  std::optional<double> spare_;
};

struct HaarOptions {
  // Multiply the columns of Q by sign(diag R). Disabling it is a negative
  // control only: the result is orthogonal but not Haar distributed.
  bool sign_fix = true;
};

class OrthogonalMatrix;
OrthogonalMatrix sample_haar_orthogonal(std::size_t n, Generator& gen, HaarOptions options);

/// An n x n real matrix in SO(n).
class OrthogonalMatrix {
 public:
  static OrthogonalMatrix identity(std::size_t n);
  /// Validates OᵀO = I and det O = +1 to `tolerance`; throws DomainError.
  static OrthogonalMatrix from_matrix(Eigen::MatrixXd m, double tolerance = 1e-10);

  const Eigen::MatrixXd& matrix() const { return m_; }
  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }

 private:
  explicit OrthogonalMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {}
  friend OrthogonalMatrix sample_haar_orthogonal(std::size_t, Generator&, HaarOptions);

  Eigen::MatrixXd m_;
};

/// Haar-distributed element of SO(n): QR of a Gaussian matrix (filled column
/// by column), sign-corrected, with the last column negated when det = -1.
OrthogonalMatrix sample_haar_orthogonal(std::size_t n, Generator& gen, HaarOptions options);
inline OrthogonalMatrix sample_haar_orthogonal(std::size_t n, Generator& gen) {
  return sample_haar_orthogonal(n, gen, HaarOptions{});
}

struct GaussianVector {
  Eigen::VectorXd values;
  double sigma_b2 = 0.0;
};

GaussianVector sample_gaussian_vector(std::size_t n, double sigma_b2, Generator& gen);

/// γ/‖γ‖ for a standard Gaussian n-vector γ.
Eigen::VectorXd sample_uniform_sphere(std::size_t n, Generator& gen);

}  // namespace jacspec::rng
