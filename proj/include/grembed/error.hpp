#pragma once

#include <stdexcept>
#include <string>

namespace grembed {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

class ValidationError : public Error {
  using Error::Error;
};
class ResourceError : public Error {
  using Error::Error;
};
class UnsupportedError : public Error {
  using Error::Error;
};
class IndexError : public Error {
  using Error::Error;
};
class ShapeError : public Error {
  using Error::Error;
};
class NumericError : public Error {
  using Error::Error;
};
class ContractError : public Error {
  using Error::Error;
};
class LookupError : public Error {
  using Error::Error;
};
class DomainError : public Error {
  using Error::Error;
};
/// Bad user configuration: unknown flags, missing files, infeasible settings.
class ConfigError : public Error {
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (final residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

}  // namespace grembed
