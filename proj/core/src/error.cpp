#include "cras/error.hpp"

namespace cras {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kDimMismatch: return "dim_mismatch";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kBadMagic: return "bad_magic";
    case ErrorCode::kBadVersion: return "bad_version";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kManifest: return "manifest";
    case ErrorCode::kZeroNorm: return "zero_norm";
    case ErrorCode::kMissingCache: return "missing_cache";
    case ErrorCode::kDivergence: return "divergence";
  }
  return "unknown";
}

}  // namespace cras
