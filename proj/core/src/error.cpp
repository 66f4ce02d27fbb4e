#include "tda/error.hpp"

namespace tda {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::label_out_of_range: return "label_out_of_range";
    case ErrorCode::empty_state: return "empty_state";
    case ErrorCode::incompatible: return "incompatible";
    case ErrorCode::capacity: return "capacity";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::diverged: return "diverged";
    case ErrorCode::not_converged: return "not_converged";
    case ErrorCode::no_evidence: return "no_evidence";
    case ErrorCode::io: return "io";
    case ErrorCode::integrity: return "integrity";
    case ErrorCode::unsupported_version: return "unsupported_version";
  }
  return "unknown";
}

int exit_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::shape_mismatch:
    case ErrorCode::label_out_of_range:
    case ErrorCode::empty_state:
      return 2;
    case ErrorCode::incompatible:
    case ErrorCode::capacity:
      return 3;
    case ErrorCode::numeric:
    case ErrorCode::diverged:
    case ErrorCode::not_converged:
    case ErrorCode::no_evidence:
      return 4;
    case ErrorCode::io:
    case ErrorCode::integrity:
    case ErrorCode::unsupported_version:
      return 5;
  }
  return 1;
}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace tda
