#pragma once

#include <stdexcept>
#include <string>

namespace tda {

enum class ErrorCode {
  invalid_argument,
  shape_mismatch,
  label_out_of_range,
  empty_state,
  incompatible,
  capacity,
  numeric,
  diverged,
  not_converged,
  no_evidence,
  io,
  integrity,
  unsupported_version,
};

// All library failures are reported through this type. The code decides the
// CLI exit status (see exit_status).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

const char* to_string(ErrorCode code) noexcept;

// 2 config, 3 incompatibility, 4 numeric failure, 5 I/O or integrity.
int exit_status(ErrorCode code) noexcept;

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace tda
