#pragma once

#include <stdexcept>
#include <string>

namespace ptstab {

/// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Evaluation requested at t < 0 or t >= T.
class TimeOutOfHorizon : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A rate function has no certified quadratic floor p0 * xi^2.
class NotCertifiable : public Error {
 public:
  using Error::Error;
};

class NoQuadraticFloor : public Error {
 public:
  using Error::Error;
};

class ConvergenceFailure : public Error {
 public:
  using Error::Error;
};

/// The Metzler comparison matrix has a nonnegative spectral abscissa.
class NotDiagonallyStable : public Error {
 public:
  using Error::Error;
};

class NotHurwitz : public Error {
 public:
  using Error::Error;
};

/// Interconnection topology and supplied data disagree.
class SpecMismatch : public Error {
 public:
  using Error::Error;
};

/// The integrated state or an input became NaN or infinite.
class NonFiniteState : public Error {
 public:
  NonFiniteState(const std::string& what, double t) : Error(what), time_(t) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// A Lyapunov inequality references a signal the trajectory does not carry.
class MissingSignal : public Error {
 public:
  using Error::Error;
};

}  // namespace ptstab
