#pragma once
// Reference computations for the test suites. Nothing here calls into the
// transform or solver code under test.

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

namespace oracle {

// Constants computed once in 30-digit arithmetic (mpmath / sympy).
namespace frozen {
// q = (1 - exp(-2q))/2 + 0.1
inline constexpr double kQStarSin1 = 0.35338028811242327;
// P(|γ| > 1)
inline constexpr double kTwoSidedTail1 = 0.31731050786291410;
// Root of ½w/(1-w) + ½·4w/(1-4w) = -0.2, and z(m)(m+1)/m there.
inline constexpr double kInverseMgfHalfOneFour = -0.10830800311658295;
inline constexpr double kSTransformHalfOneFour = 0.43323201246633180;
// First four moments of (½δ_{1/4} + ½δ_1)^{⊠2}.
inline constexpr double kKKMoments[4] = {25.0 / 64.0, 1075.0 / 4096.0, 27725.0 / 131072.0,
                                         3062275.0 / 16777216.0};
}  // namespace frozen

inline double bisect(const std::function<double(double)>& f, double lo, double hi, int iters = 200) {
  double flo = f(lo);
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// E sin²(√q γ) + σ_b²
inline double sin_q_map(double q, double sigma_b2) { return (1.0 - std::exp(-2.0 * q)) / 2.0 + sigma_b2; }
// E cos²(√q γ)
inline double e_cos2(double q) { return (1.0 + std::exp(-2.0 * q)) / 2.0; }
// P(|γ| > x)
inline double two_sided_tail(double x) { return std::erfc(x / std::sqrt(2.0)); }

inline double q_star_sin1(double sigma_b2) {
  return bisect([&](double q) { return sin_q_map(q, sigma_b2) - q; }, 1e-9, 2.0);
}

struct Atoms {
  std::vector<double> x;
  std::vector<double> p;
};

inline double atom_moment(const Atoms& a, int k) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.x.size(); ++i) s += a.p[i] * std::pow(a.x[i], k);
  return s;
}

// Σ_{k=1}^{terms} m_k w^k
inline std::complex<double> series_mgf(const Atoms& a, std::complex<double> w, int terms = 60) {
  std::complex<double> s = 0.0;
  std::complex<double> wk = 1.0;
  for (int k = 1; k <= terms; ++k) {
    wk *= w;
    s += atom_moment(a, k) * wk;
  }
  return s;
}

inline double direct_stieltjes_real(const Atoms& a, double z) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.x.size(); ++i) s += a.p[i] / (a.x[i] - z);
  return s;
}

// Truncated power series c[0] + c[1] x + ... + c[N] x^N.
using Series = std::vector<double>;

inline Series series_mul(const Series& a, const Series& b) {
  const std::size_t n = a.size();
  Series c(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; i + j < n; ++j) c[i + j] += a[i] * b[j];
  return c;
}

// a(b(x)) with b[0] = 0.
inline Series series_compose(const Series& a, const Series& b) {
  const std::size_t n = a.size();
  Series out(n, 0.0), power(n, 0.0);
  power[0] = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) out[i] += a[k] * power[i];
    power = series_mul(power, b);
  }
  return out;
}

// Compositional inverse of a series with a[0] = 0, a[1] != 0.
inline Series series_revert(const Series& a) {
  const std::size_t n = a.size();
  Series inv(n, 0.0);
  inv[1] = 1.0 / a[1];
  for (std::size_t k = 2; k < n; ++k) {
    const Series c = series_compose(a, inv);
    inv[k] = -c[k] / a[1];
  }
  return inv;
}

// First `count` moments of A ⊠ B from the moments of A and B, through the
// product of S-transforms as power series: χ_M = χ_A χ_B (1+m)/m.
inline std::vector<double> free_product_moments(const std::vector<double>& ma, const std::vector<double>& mb,
                                                std::size_t count) {
  const std::size_t n = count + 2;
  Series psi_a(n, 0.0), psi_b(n, 0.0);
  for (std::size_t k = 1; k < n && k <= ma.size(); ++k) psi_a[k] = ma[k - 1];
  for (std::size_t k = 1; k < n && k <= mb.size(); ++k) psi_b[k] = mb[k - 1];
  const Series chi_a = series_revert(psi_a);
  const Series chi_b = series_revert(psi_b);
  Series prod = series_mul(chi_a, chi_b);  // starts at m²
  Series chi_m(n, 0.0);
  for (std::size_t k = 1; k + 1 < n; ++k) chi_m[k] = prod[k + 1] + prod[k];  // (prod/m)(1 + m)
  const Series psi_m = series_revert(chi_m);
  return std::vector<double>(psi_m.begin() + 1, psi_m.begin() + 1 + static_cast<long>(count));
}

inline std::vector<double> atom_moments(const Atoms& a, std::size_t count) {
  std::vector<double> m(count);
  for (std::size_t k = 1; k <= count; ++k) m[k - 1] = atom_moment(a, static_cast<int>(k));
  return m;
}

}  // namespace oracle
