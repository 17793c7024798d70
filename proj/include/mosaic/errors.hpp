#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mosaic {

/// Broad failure category. The CLI maps these onto exit codes
/// (input = 2, degenerate = 1, invariant = 3).
enum class ErrorKind { kInput, kDegenerate, kInvariant };

/// Base error carrying the name of the module that raised it.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message, ErrorKind kind)
      : std::runtime_error(module + ": " + message), module_(std::move(module)), kind_(kind) {}

  [[nodiscard]] const std::string& module() const noexcept { return module_; }
  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  std::string module_;
  ErrorKind kind_;
};

class ArgumentError : public Error {
 public:
  ArgumentError(std::string module, const std::string& message)
      : Error(std::move(module), message, ErrorKind::kInput) {}
};

class ParseError : public Error {
 public:
  ParseError(std::string module, std::size_t line, const std::string& message)
      : Error(std::move(module), "line " + std::to_string(line) + ": " + message, ErrorKind::kInput),
        line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicationError : public Error {
 public:
  DuplicationError(std::string module, const std::string& message)
      : Error(std::move(module), message, ErrorKind::kInput) {}
};

class CoverageError : public Error {
 public:
  CoverageError(std::string module, const std::string& message)
      : Error(std::move(module), message, ErrorKind::kInput) {}
};

/// Raised when an exposure block is numerically rank deficient.
class RankError : public Error {
 public:
  RankError(std::string module, const std::string& message, std::vector<std::string> factors)
      : Error(std::move(module), message, ErrorKind::kInput), factors_(std::move(factors)) {}

  /// Factors that could not be identified (dropped by the pivoted QR).
  [[nodiscard]] const std::vector<std::string>& factors() const noexcept { return factors_; }

 private:
  std::vector<std::string> factors_;
};

class PowerlessConfigError : public Error {
 public:
  PowerlessConfigError(std::string module, const std::string& message)
      : Error(std::move(module), message, ErrorKind::kInput) {}
};

class DegenerateBatchError : public Error {
 public:
  DegenerateBatchError(std::string module, const std::string& message)
      : Error(std::move(module), message, ErrorKind::kInput) {}
};

/// A statistic or resampling procedure produced no variability.
class DegeneracyError : public Error {
 public:
  DegeneracyError(std::string module, const std::string& message)
      : Error(std::move(module), message, ErrorKind::kDegenerate) {}
};

class InvariantError : public Error {
 public:
  InvariantError(std::string module, const std::string& message)
      : Error(std::move(module), message, ErrorKind::kInvariant) {}
};

}  // namespace mosaic
