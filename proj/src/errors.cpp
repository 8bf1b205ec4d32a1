#include "flowmatch/errors.hpp"

namespace flowmatch {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kNumerical: return "numerical";
    case ErrorKind::kConvergence: return "convergence";
    case ErrorKind::kDegenerateData: return "degenerate-data";
    case ErrorKind::kUnderflow: return "underflow";
    case ErrorKind::kStiffness: return "stiffness";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kIllConditionedReference: return "ill-conditioned-reference";
    case ErrorKind::kVersionMismatch: return "version-mismatch";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

}  // namespace flowmatch
