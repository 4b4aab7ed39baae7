#pragma once

#include <stdexcept>
#include <string>

namespace stam {

enum class ErrorKind {
  InvalidInput,
  InvalidDimension,
  InvalidHyperparameter,
  InvalidSpecification,
  SpecificationMismatch,
  NotPositiveDefinite,
  ImpossibleCell,
  EmptyStratum,
  InsufficientDraws,
  NonConvergence,
  SearchFailed,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace stam
