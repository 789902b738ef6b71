#pragma once

#include <stdexcept>
#include <string>

namespace oed {

// Every failure raised by the library derives from Error; the C API maps each
// subclass onto one status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or configuration (non-SPD theta, duplicate sensors, r > d, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A linear solve or factorization failed. Carries the achieved relative residual
// when one is available (negative otherwise).
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what, double residual = -1.0)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// The request is valid but too large for the dense/exhaustive path.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// An operation was invoked in the wrong state (e.g. missing linearization).
class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace oed
