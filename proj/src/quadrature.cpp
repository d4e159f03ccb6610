#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

#include "jacspec/error.hpp"
#include "jacspec/free_conv.hpp"

namespace jacspec::freeconv {

namespace {

// Orthonormal probabilists' Hermite recurrence at x. Returns p_n(x) and fills
// p_{n-1}(x) and Σ_{k<n} p_k(x)².
long double hermite_orthonormal(std::size_t n, long double x, long double* prev, long double* sumsq) {
  long double pm1 = 0.0L;
  long double p = 1.0L;
  long double s = 0.0L;
  for (std::size_t k = 0; k < n; ++k) {
    s += p * p;
    const long double next = (x * p - std::sqrt(static_cast<long double>(k)) * pm1) /
                             std::sqrt(static_cast<long double>(k + 1));
    pm1 = p;
    p = next;
  }
  *prev = pm1;
  *sumsq = s;
  return p;
}

}  // namespace

QuadratureRule QuadratureRule::gauss_hermite(std::size_t order) {
  if (order == 0) throw DomainError("gauss_hermite: order must be >= 1");
  const auto n = static_cast<Eigen::Index>(order);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(std::max<Eigen::Index>(n - 1, 0));
  for (Eigen::Index k = 0; k + 1 < n; ++k) sub(k) = std::sqrt(static_cast<double>(k + 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> jacobi;
  jacobi.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);

  QuadratureRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  long double total = 0.0L;
  std::vector<long double> w(order);
  for (std::size_t i = 0; i < order; ++i) {
    long double x = jacobi.eigenvalues()(static_cast<Eigen::Index>(i));
    long double prev = 0.0L, sumsq = 0.0L;
    // p_n' = √n p_{n-1}
    for (int it = 0; it < 8; ++it) {
      const long double p = hermite_orthonormal(order, x, &prev, &sumsq);
      const long double dp = std::sqrt(static_cast<long double>(order)) * prev;
      if (dp == 0.0L) break;
      const long double step = p / dp;
      x -= step;
      if (std::abs(step) <= 1e-19L * std::max(1.0L, std::abs(x))) break;
    }
    hermite_orthonormal(order, x, &prev, &sumsq);
    rule.nodes[i] = static_cast<double>(x);
    w[i] = 1.0L / sumsq;
    total += w[i];
  }
  // Symmetrise: the rule is exactly symmetric about 0.
  for (std::size_t i = 0; i < order / 2; ++i) {
    const std::size_t j = order - 1 - i;
    const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
    rule.nodes[i] = -x;
    rule.nodes[j] = x;
    const long double avg = 0.5L * (w[i] + w[j]);
    w[i] = w[j] = avg;
  }
  if (order % 2 == 1) rule.nodes[order / 2] = 0.0;
  total = std::accumulate(w.begin(), w.end(), 0.0L);
  for (std::size_t i = 0; i < order; ++i) rule.weights[i] = static_cast<double>(w[i] / total);
  return rule;
}

QuadratureRule QuadratureRule::gaussian_quantiles(std::size_t count) {
  if (count == 0) throw DomainError("gaussian_quantiles: count must be >= 1");
  QuadratureRule rule;
  rule.nodes.resize(count);
  rule.weights.assign(count, 1.0 / static_cast<double>(count));
  for (std::size_t i = 0; i < count; ++i) {
    const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(count);
    rule.nodes[i] = -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
  }
  for (std::size_t i = 0; i < count / 2; ++i) {
    const double x = 0.5 * (rule.nodes[count - 1 - i] - rule.nodes[i]);
    rule.nodes[i] = -x;
    rule.nodes[count - 1 - i] = x;
  }
  if (count % 2 == 1) rule.nodes[count / 2] = 0.0;
  double second = 0.0;
  for (const double x : rule.nodes) second += x * x;
  second /= static_cast<double>(count);
  if (second > 0.0) {
    const double scale = 1.0 / std::sqrt(second);
    for (double& x : rule.nodes) x *= scale;
  }
  return rule;
}

double QuadratureRule::expect(const std::function<double(double)>& g) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) sum += weights[i] * g(nodes[i]);
  return sum;
}

BiasConvention parse_bias_convention(const std::string& s) {
  if (s == "ql") return BiasConvention::kIncludeBias;
  if (s == "qlql") return BiasConvention::kOmitBias;
  throw ConfigError("bias_convention", "expected 'ql' or 'qlql', got '" + s + "'");
}

const char* to_string(BiasConvention c) { return c == BiasConvention::kIncludeBias ? "ql" : "qlql"; }

namespace {

double q_step(const net::Nonlinearity& phi, double q, double sigma_b2, const QuadratureRule& quad,
              BiasConvention convention) {
  const double root = std::sqrt(q);
  const double e = quad.expect([&](double x) {
    const double v = phi.value(root * x);
    return v * v;
  });
  const double next = convention == BiasConvention::kIncludeBias ? e + sigma_b2 : e;
  if (!std::isfinite(next)) throw DomainError("q_recursion: non-finite quadrature sum");
  return next;
}

}  // namespace

QProfile q_recursion(const net::Nonlinearity& phi, double q0, double sigma_b2, std::size_t depth,
                     const QuadratureRule& quad, BiasConvention convention) {
  if (!(sigma_b2 >= 0.0)) throw DomainError("q_recursion: sigma_b2 must be >= 0");
  if (!(q0 > sigma_b2)) throw DomainError("q_recursion: q0 must exceed sigma_b2");
  QProfile profile{{q0}, sigma_b2, convention};
  profile.values.reserve(depth + 1);
  for (std::size_t l = 1; l <= depth; ++l) {
    profile.values.push_back(q_step(phi, profile.values.back(), sigma_b2, quad, convention));
  }
  return profile;
}

double q_fixed_point(const net::Nonlinearity& phi, double sigma_b2, const QuadratureRule& quad,
                     BiasConvention convention) {
  auto defect = [&](double q) { return q_step(phi, q, sigma_b2, quad, convention) - q; };
  double lo = 1e-12;
  double hi = 2.0 + sigma_b2;  // the map is bounded by sup φ² + σ_b²
  if (!(defect(lo) > 0.0)) throw DomainError("q_fixed_point: the recursion has no positive fixed point");
  if (!(defect(hi) < 0.0)) throw DomainError("q_fixed_point: could not bracket the fixed point");
  for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (defect(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

SpectralMeasure nu_K(const net::Nonlinearity& phi, double q, const QuadratureRule& quad) {
  if (!(q > 0.0)) throw DomainError("nu_K: q must be > 0");
  const double root = std::sqrt(q);
  std::vector<std::pair<double, double>> atoms;
  atoms.reserve(quad.nodes.size());
  for (std::size_t i = 0; i < quad.nodes.size(); ++i) {
    if (quad.weights[i] < 1e-14) continue;
    const double d = phi.derivative(root * quad.nodes[i]);
    atoms.emplace_back(d * d, quad.weights[i]);
  }
  std::sort(atoms.begin(), atoms.end());
  std::vector<double> pos, wts;
  double total = 0.0;
  for (const auto& [x, w] : atoms) {
    if (!pos.empty() && std::abs(x - pos.back()) <= 1e-12 * std::max(1.0, x)) {
      wts.back() += w;
    } else {
      pos.push_back(x);
      wts.push_back(w);
    }
    total += w;
  }
  for (double& w : wts) w /= total;
  return SpectralMeasure::atomic(std::move(pos), std::move(wts));
}

}  // namespace jacspec::freeconv
