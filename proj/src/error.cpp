#include "stam/error.hpp"

namespace stam {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::InvalidDimension: return "invalid dimension";
    case ErrorKind::InvalidHyperparameter: return "invalid hyperparameter";
    case ErrorKind::InvalidSpecification: return "invalid specification";
    case ErrorKind::SpecificationMismatch: return "specification mismatch";
    case ErrorKind::NotPositiveDefinite: return "not positive definite";
    case ErrorKind::ImpossibleCell: return "impossible cell";
    case ErrorKind::EmptyStratum: return "empty stratum";
    case ErrorKind::InsufficientDraws: return "insufficient draws";
    case ErrorKind::NonConvergence: return "non-convergence";
    case ErrorKind::SearchFailed: return "search failed";
  }
  return "unknown error";
}

}  // namespace stam
