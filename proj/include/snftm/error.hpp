#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include "snftm/types.hpp"

namespace snftm {

/// Base of every domain error raised by the library. The CLI maps these to
/// exit status 1; UsageError maps to 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class GridBoundsError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UnsupportedLaw : public Error {
 public:
  using Error::Error;
};

class InstanceTooLarge : public Error {
 public:
  using Error::Error;
};

/// A query touched a history cell that carries no estimate (zero at-risk
/// count) or lies outside the support of the law.
class UndefinedCell : public Error {
 public:
  using Error::Error;
};

class InsufficientHistory : public Error {
 public:
  using Error::Error;
};

class StructuralZero : public Error {
 public:
  using Error::Error;
};

class NonIdentifiable : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

class SeparationError : public Error {
 public:
  using Error::Error;
};

class BracketError : public Error {
 public:
  using Error::Error;
};

class WeakIdentification : public Error {
 public:
  using Error::Error;
};

class OptimizationFailure : public Error {
 public:
  using Error::Error;
};

/// Optimizer ran out of budget; carries the best parameter vector seen.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Vector best)
      : Error(what), best_(std::move(best)) {}
  const Vector& best_iterate() const { return best_; }

 private:
  Vector best_;
};

/// Malformed input (CSV/JSON/flags). Line and column are 1-based, 0 if unknown.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what, int line = 0, int column = 0)
      : Error(line > 0 ? what + " (line " + std::to_string(line) + ", column " +
                             std::to_string(column) + ")"
                       : what),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

}  // namespace snftm
