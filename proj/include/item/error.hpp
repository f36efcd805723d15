#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace item {

enum class ErrorKind {
  InvalidArgument,
  ZeroWidth,
  ZeroProbability,
  NonFiniteObjective,
  DegenerateRegressor,
  EmptyGrid,
  NoEligibleRegressors,
  SingleLevelCategorical,
  NonMarkovianRegressor,
  AllZeroWeights,
  SchemaMismatch,
  ParseError,
  IoError,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above so the
/// command line front end can map it onto an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by the CSV loader; `line()` is 1-based and counts the header.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace item
