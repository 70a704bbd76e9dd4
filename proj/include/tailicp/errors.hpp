#pragma once

#include <stdexcept>
#include <string>

namespace tailicp {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Probability integral transform hit a boundary probability.
class TransformError : public Error {
 public:
  TransformError(const std::string& what, double value)
      : Error(what), value_(value) {}
  double value() const noexcept { return value_; }

 private:
  double value_;
};

// Iterative solver failed (root finding, optimisation).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Model fitting failed; carries the iteration trace when available.
class FitError : public Error {
 public:
  FitError(const std::string& what, std::string trace = {})
      : Error(what), trace_(std::move(trace)) {}
  const std::string& trace() const noexcept { return trace_; }

 private:
  std::string trace_;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Bad configuration key, value or file. Maps to CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. Line numbers are 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& msg)
      : Error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " + msg),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace tailicp
