#pragma once

#include <stdexcept>
#include <string>

namespace nsvm {

enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  non_finite,
  parse,
  io,
  version_mismatch,
  variant_mismatch,
};

/// Structured error raised by every module. Numeric failures (non_finite)
/// are distinguished so the CLI can map them to their own exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace nsvm
