#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace judgecal {

enum class ErrorKind {
  ZeroTotal,
  MismatchedGenerators,
  ThresholdOutOfRange,
  NoItems,
  NoAnnotations,
  EmptyRow,
  EmptyMatrix,
  DomainError,
  ShapeMismatch,
  InvalidS,
  InvalidConfig,
  ParseError,
  DuplicateConflict,
  IoError,
};

std::string_view to_string(ErrorKind kind);

// Every fatal condition raised by the library. Non-fatal conditions
// (empty cells, unsupported reliability sides, non-convergence) are
// reported as values on the returned objects instead.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace judgecal
