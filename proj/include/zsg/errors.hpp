#pragma once

#include <stdexcept>
#include <string>

namespace zsg {

// Root of every error the library throws. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor / matrix / vector extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid or unknown configuration value (activation kind, encoder name, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input files.
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced or consumed, or an undefined numeric quantity.
class NumericError : public Error {
 public:
  using Error::Error;
};

// cosine() of a zero vector.
class UndefinedSimilarityError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Spearman of a constant sample.
class UndefinedCorrelationError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Fewer than two benchmark pairs survived OOV filtering.
class InsufficientCoverageError : public Error {
 public:
  InsufficientCoverageError(std::string benchmark, const std::string& what)
      : Error(what), benchmark_(std::move(benchmark)) {}
  const std::string& benchmark() const noexcept { return benchmark_; }

 private:
  std::string benchmark_;
};

// Misuse of the autodiff tape (double backward, detached loss, ...).
class TapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace zsg
