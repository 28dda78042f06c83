#pragma once

#include <stdexcept>
#include <string>

namespace hpm {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or lengths that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller-side precondition that does not hold (e.g. an infeasible reference point).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A decomposition failed to produce a usable result.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A linear system is too ill-conditioned to be solved without regularization.
class ConditioningError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// The nonmonotone line search ran past its curvature ceiling.
class LineSearchError : public Error {
 public:
  using Error::Error;
};

/// A guaranteed invariant was observed to fail at runtime.
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace hpm
