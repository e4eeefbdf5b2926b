#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gnnvault {

enum class ErrorCode {
  kMalformedGraph,
  kBadMagic,
  kTruncated,
  kChecksumMismatch,
  kIndexOutOfRange,
  kUnsupportedVersion,
  kInsufficientLabels,
  kDimensionMismatch,
  kNonFinite,
  kEmptyMask,
  kDivergence,
  kBudgetExceeded,
  kInvalidArgument,
  kSingleClass,
  kEmptyClass,
  kIo,
  kConfig,
};

/// Stable snake_case name, used in machine-readable error output.
std::string_view error_code_name(ErrorCode code) noexcept;

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

}  // namespace gnnvault
