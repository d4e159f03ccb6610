#include "jacspec/rng.hpp"

#include <cmath>
#include <string>

#include "jacspec/error.hpp"

namespace jacspec::rng {
namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Generator::Generator(RngSeed seed) {
  std::uint64_t x = seed.value;
  for (auto& word : state_) word = splitmix64(x);
}

std::uint64_t Generator::next_u64() {
  const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Generator::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Generator::gaussian() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  double u = 0.0, v = 0.0, s = 0.0;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  return u * factor;
}

OrthogonalMatrix OrthogonalMatrix::identity(std::size_t n) {
  if (n == 0) throw DomainError("orthogonal matrix dimension must be >= 1");
  const auto dim = static_cast<Eigen::Index>(n);
  return OrthogonalMatrix(Eigen::MatrixXd::Identity(dim, dim));
}

OrthogonalMatrix OrthogonalMatrix::from_matrix(Eigen::MatrixXd m, double tolerance) {
  if (m.rows() == 0 || m.rows() != m.cols()) {
    throw DomainError("orthogonal matrix must be square and non-empty");
  }
  const Eigen::MatrixXd gram = m.transpose() * m;
  const double defect =
      (gram - Eigen::MatrixXd::Identity(m.rows(), m.cols())).cwiseAbs().maxCoeff();
  if (defect > tolerance) {
    throw DomainError("matrix is not orthogonal (max |OᵀO - I| = " + std::to_string(defect) + ")");
  }
  const double det = m.partialPivLu().determinant();
  if (std::abs(det - 1.0) > std::max(tolerance, 1e-9)) {
    throw DomainError("orthogonal matrix has det " + std::to_string(det) + ", expected +1");
  }
  return OrthogonalMatrix(std::move(m));
}

OrthogonalMatrix sample_haar_orthogonal(std::size_t n, Generator& gen, HaarOptions options) {
  if (n == 0) throw DomainError("sample_haar_orthogonal: n must be >= 1");
  const auto dim = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd a(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j)
    for (Eigen::Index i = 0; i < dim; ++i) a(i, j) = gen.gaussian();

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();

  // Each Householder factor with a nonzero coefficient is a reflection.
  int det_sign = 1;
  for (Eigen::Index k = 0; k < qr.hCoeffs().size(); ++k) {
    if (qr.hCoeffs()(k) != 0.0) det_sign = -det_sign;
  }
  if (options.sign_fix) {
    const auto r_diag = qr.matrixQR().diagonal();
    for (Eigen::Index j = 0; j < dim; ++j) {
      if (r_diag(j) < 0.0) {
        q.col(j) = -q.col(j);
        det_sign = -det_sign;
      }
    }
  }
  if (det_sign < 0) q.col(dim - 1) = -q.col(dim - 1);
  return OrthogonalMatrix(std::move(q));
}

GaussianVector sample_gaussian_vector(std::size_t n, double sigma_b2, Generator& gen) {
  if (n == 0) throw DomainError("sample_gaussian_vector: n must be >= 1");
  if (!(sigma_b2 >= 0.0)) throw DomainError("sample_gaussian_vector: sigma_b2 must be >= 0");
  GaussianVector out{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)), sigma_b2};
  if (sigma_b2 == 0.0) return out;
  const double sd = std::sqrt(sigma_b2);
  for (Eigen::Index i = 0; i < out.values.size(); ++i) out.values(i) = sd * gen.gaussian();
  return out;
}

Eigen::VectorXd sample_uniform_sphere(std::size_t n, Generator& gen) {
  if (n == 0) throw DomainError("sample_uniform_sphere: n must be >= 1");
  Eigen::VectorXd g(static_cast<Eigen::Index>(n));
  double norm = 0.0;
  do {
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = gen.gaussian();
    norm = g.norm();
  } while (norm == 0.0);
  return g / norm;
}

}  // namespace jacspec::rng
