#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sseg {

enum class ErrorKind {
  EmptyPointSet,
  UnknownLabel,
  EmptyShape,
  MissingGeometry,
  InvalidCost,
  InvalidSegmentation,
  DuplicateSource,
  UnknownNode,
  InvalidProbability,
  ParseError,
  NumericFailure,
  InvalidArgument,
  IoError,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (and the CLI)
/// can map it to exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace sseg
