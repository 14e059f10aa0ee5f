#pragma once

#include <stdexcept>
#include <string>

namespace vlasov {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A cardinality or site-count cap was exceeded.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// Malformed generator text. Carries a 1-based source position.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line, int column)
      : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

/// The declared scalings do not produce a balanced mean-field limit.
class ScalingError : public Error {
 public:
  using Error::Error;
};

/// A rate is outside the family the symbolic compiler or the simulator supports.
class UnsupportedForm : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, negativity, blow-up, or a failed stability check.
class NumericalFault : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration or plan.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace vlasov
