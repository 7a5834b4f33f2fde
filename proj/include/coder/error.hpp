#pragma once

#include <stdexcept>
#include <string>

namespace coder {

enum class ErrorCode {
  kDimensionMismatch,
  kIndexOutOfRange,
  kInvalidArgument,
  kDomain,
  kDenseCapExceeded,
  kDivergence,
  kLipschitzCap,
  kParse,
  kIo,
  kConfig,
};

/// Base exception for every failure raised by the library. The code lets
/// callers (the CLI in particular) map failures to exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kIndexOutOfRange: return "index out of range";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kDomain: return "outside domain";
    case ErrorCode::kDenseCapExceeded: return "dense cap exceeded";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kLipschitzCap: return "lipschitz cap exceeded";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kConfig: return "config error";
  }
  return "unknown";
}

}  // namespace coder
