#pragma once

#include <stdexcept>
#include <string>

namespace otdro {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or input data. The CLI maps it to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; carries the offending row and column when known.
class ParseError : public ConfigError {
 public:
  ParseError(const std::string& what, long row = -1, long column = -1)
      : ConfigError(what), row_(row), column_(column) {}
  long row() const { return row_; }
  long column() const { return column_; }

 private:
  long row_;
  long column_;
};

/// Numerical breakdown. The CLI maps it to exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// (β, λ) lies outside the effective domain: the robust loss is +∞ there.
class InfeasibleDomain : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Gradient requested where the loss has a kink; use a subgradient instead.
class KinkError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace otdro
