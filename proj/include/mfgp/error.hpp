#pragma once

#include <stdexcept>
#include <string>

namespace mfgp {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for malformed inputs: bad parameters, duplicate points, bad shapes.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown. Inside optimisation these are turned into a +inf
/// objective; everywhere else they propagate.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class NonPositiveConditionalVariance : public NumericalError {
 public:
  NonPositiveConditionalVariance(int index, double value)
      : NumericalError("non-positive conditional variance at ordered position " +
                       std::to_string(index) + " (d = " + std::to_string(value) + ")"),
        index_(index) {}
  int index() const { return index_; }

 private:
  int index_;
};

class CholeskyFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularGramian : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DenseSizeExceeded : public Error {
 public:
  DenseSizeExceeded(long n, long cap)
      : Error("dense computation of size " + std::to_string(n) + " exceeds cap " +
              std::to_string(cap)) {}
};

class UnfittedEmpiricalModel : public Error {
 public:
  UnfittedEmpiricalModel() : Error("empirical GP rho model used before fitting") {}
};

class DegenerateVariance : public Error {
 public:
  explicit DegenerateVariance(int station)
      : Error("LF series has (near) zero variance at station " + std::to_string(station)),
        station_(station) {}
  int station() const { return station_; }

 private:
  int station_;
};

class OptimizationFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace mfgp
