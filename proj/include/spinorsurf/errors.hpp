#pragma once

#include <stdexcept>
#include <string>

namespace spinorsurf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grid too coarse for the requested truncation or nonlinearity.
class AliasingError : public Error {
 public:
  using Error::Error;
};

/// Two spectral objects with different truncation levels were combined.
class TruncationMismatch : public Error {
 public:
  using Error::Error;
};

/// Input outside an operation's domain (p out of range, A(psi) = 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Iterative method failed to reach its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : Error(what), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

/// Malformed configuration, Q specification or input file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace spinorsurf
