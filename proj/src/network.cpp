#include "jacspec/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "jacspec/error.hpp"

namespace jacspec::net {

Nonlinearity::Nonlinearity(NonlinearityKind kind, double gain) : kind_(kind), gain_(gain) {
  if (!(gain > 0.0) || !std::isfinite(gain)) throw DomainError("nonlinearity gain must be positive and finite");
}

Nonlinearity Nonlinearity::parse(const std::string& id) {
  const auto colon = id.find(':');
  const std::string name = id.substr(0, colon);
  double gain = 1.0;
  if (colon != std::string::npos) {
    try {
      std::size_t used = 0;
      gain = std::stod(id.substr(colon + 1), &used);
      if (used != id.size() - colon - 1) throw std::invalid_argument(id);
    } catch (const std::exception&) {
      throw ConfigError("phi", "cannot parse gain in '" + id + "'");
    }
  }
  NonlinearityKind kind;
  if (name == "hardtanh") {
    kind = NonlinearityKind::kHardTanh;
  } else if (name == "sin") {
    kind = NonlinearityKind::kSin;
  } else if (name == "erf") {
    kind = NonlinearityKind::kScaledErf;
  } else {
    throw ConfigError("phi", "unknown nonlinearity '" + name + "' (expected hardtanh, sin or erf)");
  }
  if (!(gain > 0.0) || !std::isfinite(gain)) throw ConfigError("phi", "gain must be positive");
  return Nonlinearity(kind, gain);
}

double Nonlinearity::value(double x) const {
  switch (kind_) {
    case NonlinearityKind::kHardTanh:
      return std::clamp(gain_ * x, -1.0, 1.0);
    case NonlinearityKind::kSin:
      return std::sin(gain_ * x);
    case NonlinearityKind::kScaledErf:
      return std::erf(gain_ * x * std::sqrt(M_PI) / 2.0);
  }
  return 0.0;
}

double Nonlinearity::derivative(double x) const {
  switch (kind_) {
    case NonlinearityKind::kHardTanh:
      // φ' = 0 on the kink itself.
      return std::abs(gain_ * x) < 1.0 ? gain_ : 0.0;
    case NonlinearityKind::kSin:
      return gain_ * std::cos(gain_ * x);
    case NonlinearityKind::kScaledErf: {
      const double a = gain_ * x;
      return gain_ * std::exp(-M_PI * a * a / 4.0);
    }
  }
  return 0.0;
}

std::string Nonlinearity::id() const {
  std::string name = kind_ == NonlinearityKind::kHardTanh ? "hardtanh"
                     : kind_ == NonlinearityKind::kSin    ? "sin"
                                                          : "erf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", gain_);
  return name + ":" + buf;
}

void NetworkConfig::validate() const {
  if (depth < 1) throw ConfigError("depth", "must be >= 1");
  if (width < 1) throw ConfigError("width", "must be >= 1");
  if (!(sigma_b2 >= 0.0) || !std::isfinite(sigma_b2)) throw ConfigError("sigma_b2", "must be finite and >= 0");
  if (const auto* c = std::get_if<ConstantNorm>(&input)) {
    if (!(c->q0 > sigma_b2) || !std::isfinite(c->q0)) {
      throw ConfigError("q0", "must exceed sigma_b2 strictly (the input vector must be nonzero)");
    }
  } else if (const auto* e = std::get_if<ExplicitVector>(&input)) {
    if (e->values.size() != width) throw ConfigError("input", "explicit vector length must equal width");
    double norm2 = 0.0;
    for (const double v : e->values) norm2 += v * v;
    if (!(norm2 > 0.0)) throw ConfigError("input", "input vector must be nonzero");
  } else {
    const auto& iid = std::get<IidFromSeed>(input);
    if (!(iid.variance > 0.0)) throw ConfigError("input", "iid variance must be > 0");
  }
}

Eigen::VectorXd make_input(const NetworkConfig& config, rng::Generator& gen) {
  const auto n = static_cast<Eigen::Index>(config.width);
  if (const auto* c = std::get_if<ConstantNorm>(&config.input)) {
    return Eigen::VectorXd::Constant(n, std::sqrt(c->q0 - config.sigma_b2));
  }
  if (const auto* e = std::get_if<ExplicitVector>(&config.input)) {
    return Eigen::Map<const Eigen::VectorXd>(e->values.data(), n);
  }
  const double sd = std::sqrt(std::get<IidFromSeed>(config.input).variance);
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x(i) = sd * gen.gaussian();
  if (x.squaredNorm() == 0.0) throw ConfigError("input", "sampled input vector is zero");
  return x;
}

double layer_q(const Eigen::VectorXd& x, double sigma_b2) {
  if (x.size() == 0) throw DomainError("layer_q: empty vector");
  return x.squaredNorm() / static_cast<double>(x.size()) + sigma_b2;
}

ForwardTrace forward_pass(const NetworkConfig& config) {
  config.validate();
  rng::Generator gen(config.seed);
  const Eigen::VectorXd x0 = make_input(config, gen);
  std::vector<rng::OrthogonalMatrix> weights;
  std::vector<Eigen::VectorXd> biases;
  weights.reserve(config.depth);
  biases.reserve(config.depth);
  for (std::size_t l = 0; l < config.depth; ++l) {
    weights.push_back(rng::sample_haar_orthogonal(config.width, gen));
    biases.push_back(rng::sample_gaussian_vector(config.width, config.sigma_b2, gen).values);
  }
  return forward_pass(config.phi, config.sigma_b2, x0, weights, biases);
}

ForwardTrace forward_pass(const Nonlinearity& phi, double sigma_b2, const Eigen::VectorXd& input,
                          std::span<const rng::OrthogonalMatrix> weights,
                          std::span<const Eigen::VectorXd> biases) {
  if (weights.empty() || weights.size() != biases.size()) {
    throw DomainError("forward_pass: need one weight and one bias per layer");
  }
  if (input.squaredNorm() == 0.0) throw ConfigError("input", "input vector must be nonzero");
  ForwardTrace trace;
  trace.input = input;
  trace.q0 = layer_q(input, sigma_b2);
  trace.layers.reserve(weights.size());
  const Eigen::VectorXd* x = &trace.input;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (static_cast<Eigen::Index>(weights[l].dim()) != input.size() || biases[l].size() != input.size()) {
      throw DomainError("forward_pass: all layers must have the input width");
    }
    LayerTrace layer{weights[l], biases[l], {}, {}, {}, 0.0};
    layer.pre_activation = weights[l].matrix() * (*x) + biases[l];
    layer.activation = layer.pre_activation.unaryExpr([&phi](double y) { return phi.value(y); });
    layer.derivative = layer.pre_activation.unaryExpr([&phi](double y) { return phi.derivative(y); });
    layer.q = layer_q(layer.activation, sigma_b2);
    trace.layers.push_back(std::move(layer));
    x = &trace.layers.back().activation;
  }
  return trace;
}

Eigen::MatrixXd assemble_jacobian(const ForwardTrace& trace) {
  if (trace.layers.empty()) throw DomainError("assemble_jacobian: empty trace");
  const auto& first = trace.layers.front();
  Eigen::MatrixXd j = first.derivative.asDiagonal() * first.weight.matrix();
  for (std::size_t l = 1; l < trace.layers.size(); ++l) {
    const auto& layer = trace.layers[l];
    Eigen::MatrixXd next = layer.weight.matrix() * j;
    j = layer.derivative.asDiagonal() * next;
  }
  return j;
}

Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& jacobian) {
  if (jacobian.rows() != jacobian.cols()) throw DomainError("gram_matrix: Jacobian must be square");
  const auto n = jacobian.rows();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  m.selfadjointView<Eigen::Lower>().rankUpdate(jacobian);
  m.triangularView<Eigen::StrictlyUpper>() = m.transpose();
  return m;
}

EmpiricalSpectrum empirical_ncm(const Eigen::MatrixXd& m) {
  if (m.rows() == 0 || m.rows() != m.cols()) throw DomainError("empirical_ncm: matrix must be square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8 * scale) {
    throw DomainError("empirical_ncm: matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw ConvergenceError("empirical_ncm: eigensolver failed");
  EmpiricalSpectrum out;
  out.n = static_cast<std::size_t>(m.rows());
  out.eigenvalues.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + m.rows());
  for (auto& x : out.eigenvalues) {
    if (x < 0.0) {
      if (x < -1e-10) {
        throw DomainError("empirical_ncm: eigenvalue " + std::to_string(x) + " below -1e-10");
      }
      x = 0.0;
    }
  }
  return out;
}

EmpiricalSpectrum jacobian_spectrum(const NetworkConfig& config) {
  return empirical_ncm(gram_matrix(assemble_jacobian(forward_pass(config))));
}

}  // namespace jacspec::net
