#include "gnnvault/error.hpp"

namespace gnnvault {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kMalformedGraph: return "malformed_graph";
    case ErrorCode::kBadMagic: return "bad_magic";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kChecksumMismatch: return "checksum_mismatch";
    case ErrorCode::kIndexOutOfRange: return "index_out_of_range";
    case ErrorCode::kUnsupportedVersion: return "unsupported_version";
    case ErrorCode::kInsufficientLabels: return "insufficient_labels";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kEmptyMask: return "empty_mask";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kBudgetExceeded: return "budget_exceeded";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kSingleClass: return "single_class";
    case ErrorCode::kEmptyClass: return "empty_class";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kConfig: return "config_error";
  }
  return "unknown";
}

}  // namespace gnnvault
