#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "jacspec/error.hpp"
#include "jacspec/free_conv.hpp"
#include "jacspec/network.hpp"
#include "oracles.hpp"

using namespace jacspec;
using net::Nonlinearity;
using net::NonlinearityKind;

namespace {

net::NetworkConfig make_config(std::size_t depth, std::size_t width, const char* phi, double sigma_b2, double q0,
                               std::uint64_t seed) {
  net::NetworkConfig c;
  c.depth = depth;
  c.width = width;
  c.sigma_b2 = sigma_b2;
  c.phi = Nonlinearity::parse(phi);
  c.input = net::ConstantNorm{q0};
  c.seed = rng::RngSeed{seed};
  return c;
}

// x^L as a function of x⁰ with the weights and biases of `trace` held fixed.
Eigen::VectorXd replay(const net::ForwardTrace& trace, const Nonlinearity& phi, const Eigen::VectorXd& x0) {
  Eigen::VectorXd x = x0;
  for (const auto& layer : trace.layers) {
    Eigen::VectorXd y = layer.weight.matrix() * x + layer.bias;
    for (Eigen::Index j = 0; j < y.size(); ++j) y(j) = phi.value(y(j));
    x = y;
  }
  return x;
}

Eigen::MatrixXd finite_difference_jacobian(const net::ForwardTrace& trace, const Nonlinearity& phi, double h) {
  const Eigen::Index n = trace.input.size();
  Eigen::MatrixXd j(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::VectorXd xp = trace.input, xm = trace.input;
    xp(k) += h;
    xm(k) -= h;
    j.col(k) = (replay(trace, phi, xp) - replay(trace, phi, xm)) / (2 * h);
  }
  return j;
}

double op_norm(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

}  // namespace

TEST_CASE("nonlinearity catalog") {
  const Nonlinearity ht = Nonlinearity::parse("hardtanh:2");
  CHECK(ht.kind() == NonlinearityKind::kHardTanh);
  CHECK(ht.value(0.25) == 0.5);
  CHECK(ht.value(3.0) == 1.0);
  CHECK(ht.value(-3.0) == -1.0);
  CHECK(ht.derivative(0.25) == 2.0);
  CHECK(ht.derivative(0.5) == 0.0);  // kink
  CHECK(ht.derivative(-0.5) == 0.0);
  CHECK(ht.sup_derivative() == 2.0);

  const Nonlinearity s = Nonlinearity::parse("sin:1.5");
  CHECK(s.value(0.3) == doctest::Approx(std::sin(0.45)).epsilon(1e-15));
  CHECK(s.derivative(0.3) == doctest::Approx(1.5 * std::cos(0.45)).epsilon(1e-15));

  const Nonlinearity e = Nonlinearity::parse("erf:1");
  CHECK(e.derivative(0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(e.value(10.0)) <= 1.0);
  const double h = 1e-6;
  CHECK(e.derivative(0.7) == doctest::Approx((e.value(0.7 + h) - e.value(0.7 - h)) / (2 * h)).epsilon(1e-8));

  CHECK(Nonlinearity::parse(s.id()).gain() == 1.5);
  CHECK_THROWS_AS(Nonlinearity::parse("relu:1"), ConfigError);
  CHECK(Nonlinearity::parse("sin").gain() == 1.0);
  CHECK_THROWS_AS(Nonlinearity::parse("sin:-1"), ConfigError);
}

TEST_CASE("layer_q") {
  CHECK(net::layer_q(Eigen::VectorXd::Zero(4), 0.3) == 0.3);
  CHECK(net::layer_q(Eigen::VectorXd::Ones(9), 0.0) == 1.0);
  auto c = make_config(1, 64, "sin:1", 0.5, 1.5, 1);
  rng::Generator g(c.seed);
  CHECK(net::layer_q(net::make_input(c, g), 0.5) == 1.5);
}

TEST_CASE("config validation") {
  auto c = make_config(2, 8, "sin:1", 0.5, 0.5, 1);
  CHECK_THROWS_AS(c.validate(), ConfigError);  // q⁰ must exceed σ_b²
  c.input = net::ConstantNorm{0.7};
  CHECK_NOTHROW(c.validate());
  c.input = net::ExplicitVector{std::vector<double>(8, 0.0)};
  CHECK_THROWS_AS(net::forward_pass(c), ConfigError);
  c.input = net::ExplicitVector{std::vector<double>(7, 1.0)};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = make_config(0, 8, "sin:1", 0.1, 1.0, 1);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = make_config(1, 0, "sin:1", 0.1, 1.0, 1);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = make_config(1, 4, "sin:1", -0.1, 1.0, 1);
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("forward pass by hand") {
  const Nonlinearity phi = Nonlinearity::parse("sin:1");
  Eigen::VectorXd x0(2);
  x0 << 1, 0;
  const std::vector<rng::OrthogonalMatrix> w{rng::OrthogonalMatrix::identity(2)};
  const std::vector<Eigen::VectorXd> b{Eigen::VectorXd::Zero(2)};
  const auto t = net::forward_pass(phi, 0.0, x0, w, b);
  REQUIRE(t.layers.size() == 1);
  CHECK(t.layers[0].pre_activation(0) == 1.0);
  CHECK(t.layers[0].pre_activation(1) == 0.0);
  CHECK(t.layers[0].activation(0) == std::sin(1.0));
  CHECK(t.layers[0].activation(1) == 0.0);
  CHECK(t.layers[0].derivative(0) == std::cos(1.0));
  CHECK(t.layers[0].derivative(1) == 1.0);
  CHECK(t.q0 == 0.5);
}

TEST_CASE("activations are bounded by sup|φ|") {
  for (const char* phi : {"sin:3", "hardtanh:2", "erf:4"}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto t = net::forward_pass(make_config(3, 40, phi, 0.5, 2.0, seed));
      CHECK(t.layers.back().activation.cwiseAbs().maxCoeff() <= 1.0);
    }
  }
}

TEST_CASE("finite-width q^l tracks the recursion") {
  const std::size_t n = 256;
  const auto c = make_config(3, n, "sin:1", 0.1, 1.0, 2024);
  const auto t = net::forward_pass(c);
  const auto prof = freeconv::q_recursion(c.phi, 1.0, 0.1, 3, freeconv::QuadratureRule::gauss_hermite(201));
  // Closed form for Sin(1) as an independent check of the recursion itself.
  double q = 1.0;
  for (std::size_t l = 0; l < 3; ++l) {
    q = oracle::sin_q_map(q, 0.1);
    CHECK(prof.values[l + 1] == doctest::Approx(q).epsilon(1e-13));
    CHECK(std::abs(t.layers[l].q - prof.values[l + 1]) < 5.0 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("assemble_jacobian") {
  SUBCASE("diagonal by hand") {
    net::ForwardTrace t;
    t.input = Eigen::VectorXd::Ones(2);
    net::LayerTrace l{rng::OrthogonalMatrix::identity(2), Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2),
                      Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2), 0.0};
    l.derivative << 1, 2;
    t.layers.push_back(l);
    const Eigen::MatrixXd j = net::assemble_jacobian(t);
    CHECK(j(0, 0) == 1.0);
    CHECK(j(1, 1) == 2.0);
    CHECK(j(0, 1) == 0.0);
    CHECK(j(1, 0) == 0.0);
    const Eigen::MatrixXd m = net::gram_matrix(j);
    CHECK(m(0, 0) == 1.0);
    CHECK(m(1, 1) == 4.0);
  }
  SUBCASE("operator norm at most gain^L") {
    for (const char* phi : {"sin:2", "hardtanh:1.5", "erf:3"}) {
      const auto c = make_config(4, 30, phi, 0.2, 1.0, 11);
      const auto j = net::assemble_jacobian(net::forward_pass(c));
      CHECK(op_norm(j) <= std::pow(c.phi.sup_derivative(), 4) * (1 + 1e-12));
    }
  }
  SUBCASE("ScaledErf n=20 L=3 against finite differences") {
    const auto c = make_config(3, 20, "erf:1.5", 0.1, 1.0, 5);
    const auto t = net::forward_pass(c);
    const Eigen::MatrixXd j = net::assemble_jacobian(t);
    const Eigen::MatrixXd fd = finite_difference_jacobian(t, c.phi, 1e-5);
    CHECK((j - fd).norm() / j.norm() < 1e-5);
  }
  SUBCASE("chain rule over n ≤ 32, L ≤ 4") {
    // Traces with ‖J‖ < 1e-5 are skipped: the central difference carries
    // ~1e-11 absolute roundoff, which no relative bound can absorb there.
    std::uint64_t seed = 100;
    int checked = 0;
    for (const char* phi : {"sin:1", "sin:2", "erf:1", "erf:2.5"}) {
      for (std::size_t n : {1u, 2u, 7u, 16u, 32u}) {
        for (std::size_t depth = 1; depth <= 4; ++depth) {
          const auto c = make_config(depth, n, phi, 0.2, 1.2, ++seed);
          const auto t = net::forward_pass(c);
          const Eigen::MatrixXd j = net::assemble_jacobian(t);
          const Eigen::MatrixXd fd = finite_difference_jacobian(t, c.phi, 1e-5);
          if (j.norm() < 1e-5) continue;
          ++checked;
          INFO(phi, " n=", n, " L=", depth);
          CHECK((j - fd).norm() / j.norm() < 1e-5);
        }
      }
    }
    CHECK(checked >= 75);
  }
  SUBCASE("HardTanh away from the kinks") {
    int checked = 0;
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
      const auto c = make_config(3, 12, "hardtanh:1.2", 0.1, 0.6, seed);
      const auto t = net::forward_pass(c);
      const double kink = 1.0 / 1.2;
      bool near = false;
      for (const auto& l : t.layers)
        for (Eigen::Index i = 0; i < l.pre_activation.size(); ++i)
          near |= std::abs(std::abs(l.pre_activation(i)) - kink) < 1e-3;
      if (near) continue;
      ++checked;
      const Eigen::MatrixXd j = net::assemble_jacobian(t);
      const Eigen::MatrixXd fd = finite_difference_jacobian(t, c.phi, 1e-5);
      CHECK((j - fd).norm() <= 1e-5 * std::max(j.norm(), 1.0));
    }
    CHECK(checked > 20);
  }
}

TEST_CASE("gram_matrix and empirical_ncm") {
  rng::Generator g(rng::RngSeed{31});
  SUBCASE("orthogonal J gives the identity") {
    const auto o = rng::sample_haar_orthogonal(30, g);
    CHECK((net::gram_matrix(o.matrix()) - Eigen::MatrixXd::Identity(30, 30)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("eigenvalues are squared singular values") {
    Eigen::MatrixXd j(50, 50);
    for (int r = 0; r < 50; ++r)
      for (int c = 0; c < 50; ++c) j(r, c) = g.gaussian();
    const auto spec = net::empirical_ncm(net::gram_matrix(j));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(j);
    std::vector<double> sv2;
    for (int i = 0; i < 50; ++i) sv2.push_back(svd.singularValues()(i) * svd.singularValues()(i));
    std::sort(sv2.begin(), sv2.end());
    REQUIRE(spec.eigenvalues.size() == 50);
    CHECK(spec.n == 50);
    for (int i = 0; i < 50; ++i) CHECK(std::abs(spec.eigenvalues[i] - sv2[i]) < 1e-9 * std::max(1.0, sv2[i]));
  }
  SUBCASE("simple spectra") {
    const auto id = net::empirical_ncm(Eigen::MatrixXd::Identity(5, 5));
    CHECK(id.eigenvalues == std::vector<double>(5, 1.0));
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
    d(0, 0) = 4;
    d(1, 1) = 1;
    const auto s = net::empirical_ncm(d);
    CHECK(s.eigenvalues[0] == doctest::Approx(1.0));
    CHECK(s.eigenvalues[1] == doctest::Approx(4.0));
  }
  SUBCASE("asymmetric or indefinite input is rejected") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
    a(0, 1) = 1e-6;
    CHECK_THROWS_AS(net::empirical_ncm(a), DomainError);
    Eigen::MatrixXd b = Eigen::MatrixXd::Identity(3, 3);
    b(2, 2) = -1e-6;
    CHECK_THROWS_AS(net::empirical_ncm(b), DomainError);
    Eigen::MatrixXd c = Eigen::MatrixXd::Identity(3, 3);
    c(2, 2) = -1e-12;
    const auto s = net::empirical_ncm(c);
    CHECK(s.eigenvalues[0] >= 0.0);
  }
}

TEST_CASE("depth one: spectrum is the squared derivative multiset") {
  for (const char* phi : {"sin:1", "hardtanh:1.5", "erf:2"}) {
    const auto c = make_config(1, 64, phi, 0.3, 1.0, 17);
    const auto t = net::forward_pass(c);
    const auto spec = net::empirical_ncm(net::gram_matrix(net::assemble_jacobian(t)));
    std::vector<double> d2;
    for (Eigen::Index i = 0; i < 64; ++i) d2.push_back(t.layers[0].derivative(i) * t.layers[0].derivative(i));
    std::sort(d2.begin(), d2.end());
    for (int i = 0; i < 64; ++i) CHECK(std::abs(spec.eigenvalues[i] - d2[i]) < 1e-10);
  }
}

TEST_CASE("trace bound n⁻¹ tr(M²) ≤ gain^{4L}") {
  for (const char* phi : {"sin:1.3", "hardtanh:1.1", "erf:2"}) {
    for (std::size_t depth : {1u, 2u, 4u}) {
      const auto c = make_config(depth, 48, phi, 0.1, 1.0, 3 + depth);
      const Eigen::MatrixXd m = net::gram_matrix(net::assemble_jacobian(net::forward_pass(c)));
      CHECK((m * m).trace() / 48.0 <= std::pow(c.phi.sup_derivative(), 4.0 * depth) * (1 + 1e-12));
    }
  }
}

TEST_CASE("spectral law is unchanged by O → O·P") {
  // Statistic: KS distance between each trial's spectrum and a fixed
  // reference. Two independent groups of 200 trials, one with every weight
  // right-multiplied by a fixed permutation.
  const std::size_t n = 12, depth = 2, trials = 200;
  const Nonlinearity phi = Nonlinearity::parse("sin:1.5");
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  // Product of disjoint 3-cycles, so det P = +1.
  for (std::size_t i = 0; i < n; ++i) p(i, 3 * (i / 3) + (i + 1) % 3) = 1.0;
  const auto pm = rng::OrthogonalMatrix::from_matrix(p);
  const auto reference = measures::SpectralMeasure::point_mass(1.0);

  auto statistic = [&](std::uint64_t seed, bool permute) {
    rng::Generator g(rng::RngSeed{seed});
    Eigen::VectorXd x0(n);
    for (std::size_t i = 0; i < n; ++i) x0(i) = g.gaussian();
    std::vector<rng::OrthogonalMatrix> w;
    std::vector<Eigen::VectorXd> b;
    for (std::size_t l = 0; l < depth; ++l) {
      const auto o = rng::sample_haar_orthogonal(n, g);
      w.push_back(permute ? rng::OrthogonalMatrix::from_matrix(o.matrix() * pm.matrix()) : o);
      b.push_back(rng::sample_gaussian_vector(n, 0.1, g).values);
    }
    const auto t = net::forward_pass(phi, 0.1, x0, w, b);
    const auto spec = net::empirical_ncm(net::gram_matrix(net::assemble_jacobian(t)));
    return measures::ks_distance(spec.to_measure(), reference) +
           measures::moment(spec.to_measure(), 1);  // continuous component
  };
  std::vector<double> a, bvals;
  for (std::size_t k = 0; k < trials; ++k) {
    a.push_back(statistic(5000 + k, false));
    bvals.push_back(statistic(9000 + k, true));
  }
  const double d = measures::ks_distance(measures::SpectralMeasure::empirical(a),
                                         measures::SpectralMeasure::empirical(bvals));
  CHECK(measures::ks_two_sample_pvalue(d, trials, trials) > 0.01);
}
