#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mpbetti {

/// Bad argument or parameter (non-finite rate, violated partial order, ...).
class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A construction would exceed its simplex budget.
class ResourceLimit : public std::runtime_error {
public:
  ResourceLimit(const std::string& what, std::size_t count)
      : std::runtime_error(what + " (count " + std::to_string(count) + ")"), count_(count) {}

  std::size_t count() const noexcept { return count_; }

private:
  std::size_t count_;
};

/// Requested method cannot answer this query (e.g. binary filtration across cover levels).
class UnsupportedMethod : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Malformed input text; `line` is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// Statistical computation is degenerate (zero variance, singular covariance).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace mpbetti
