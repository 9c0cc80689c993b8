#pragma once

#include <stdexcept>
#include <string>

namespace cmrg {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of the supplied matrices do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An argument violates a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A factorization or other numerical kernel failed.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Every fit in a hyperparameter grid failed to converge.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace cmrg
