#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace reportcheck {

// Error codes shared by every module. The C API maps these one-to-one onto
// rc_status values, so new codes must be appended at the end.
enum class ErrorCode {
  kInvalidArgument = 1,
  kConfig,
  kTimeout,
  kTransport,
  kRateLimited,
  kReplayMiss,
  kMalformedOutput,
  kDuplicateClaimId,
  kEmptyGold,
  kNotFetched,
  kSchemaViolation,
  kCountMismatch,
  kIncompleteScores,
  kUnknownFactorId,
  kDegenerateInput,
  kNoPairs,
  kInsufficientOverlap,
  kMissingCells,
  kMissingUpstream,
  kStageFailure,
  kIo,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

  // Network-style failures that the gateway may retry.
  bool retryable() const noexcept {
    return code_ == ErrorCode::kTimeout || code_ == ErrorCode::kTransport ||
           code_ == ErrorCode::kRateLimited;
  }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace reportcheck
