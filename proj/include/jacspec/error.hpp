#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace jacspec {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Value outside a range that was discovered at run time (e.g. an
/// invertibility window).
class RangeError : public Error {
 public:
  RangeError(const std::string& what, double lower, double upper)
      : Error(what), lower_(lower), upper_(upper) {}

  double lower() const { return lower_; }
  double upper() const { return upper_; }

 private:
  double lower_;
  double upper_;
};

/// Invalid experiment or network configuration. `field` names the offending
/// config key when there is one.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// An iterative solver stopped without meeting its tolerance. Carries the
/// residual history of the failing run.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> trajectory = {})
      : Error(what), trajectory_(std::move(trajectory)) {}

  const std::vector<double>& trajectory() const { return trajectory_; }

 private:
  std::vector<double> trajectory_;
};

/// Stieltjes-Perron recovery lost too much mass on the supplied grid.
class InversionError : public Error {
 public:
  InversionError(const std::string& what, double drift) : Error(what), drift_(drift) {}

  double drift() const { return drift_; }

 private:
  double drift_;
};

}  // namespace jacspec
