#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cras {

enum class ErrorCode {
  kInvalidArgument,
  kDimMismatch,
  kIo,
  kBadMagic,
  kBadVersion,
  kTruncated,
  kFormat,
  kNonFinite,
  kManifest,
  kZeroNorm,
  kMissingCache,
  kDivergence,
};

std::string_view to_string(ErrorCode code);

// All engine failures surface as this exception; callers that need to branch
// on the failure kind inspect code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace cras
