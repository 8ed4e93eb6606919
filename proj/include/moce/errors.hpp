#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace moce {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Points live on different manifolds, or a curvature is not negative.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameter values (e.g. a degenerate classifier direction).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed user input: configs, CSV files, dataset layouts.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or dataset format version is not supported.
class VersionError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver hit its iteration cap.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> last_iterate, double gradient_norm)
      : Error(what), last_iterate_(std::move(last_iterate)), gradient_norm_(gradient_norm) {}

  const std::vector<double>& last_iterate() const { return last_iterate_; }
  double gradient_norm() const { return gradient_norm_; }

 private:
  std::vector<double> last_iterate_;
  double gradient_norm_;
};

/// Training produced a non-finite loss or gradient.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace moce
