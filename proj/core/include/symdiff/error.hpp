#pragma once

#include <stdexcept>
#include <string>

namespace symdiff {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, malformed artifacts, inconsistent configurations.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, divergence, singular systems, impossible observations.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace symdiff
