#pragma once

#include <stdexcept>
#include <string>

namespace pathtemper {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument or configuration value; the message names the field.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class FixtureNotFound : public Error {
 public:
  explicit FixtureNotFound(const std::string& name)
      : Error("unknown fixture '" + name + "'"), name_(name) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Sampler could not find a finite starting point.
class InitializationError : public Error {
 public:
  using Error::Error;
};

/// Too many divergent transitions during warmup.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Draws do not cover enough of the auxiliary coordinate to estimate a density.
class InsufficientCoverage : public Error {
 public:
  using Error::Error;
};

/// Numerical failure inside an estimator (disjoint supports, underflow, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace pathtemper
