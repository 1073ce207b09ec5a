#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace choir {

enum class ErrorCode {
  kInvalidArgument,
  kNotARepository,
  kPermissionDenied,
  kDocumentNotFound,
  kRevisionNotFound,
  kStaleBase,
  kEmptyEdit,
  kMalformedTrailer,
  kGitFailure,
  kProviderUnavailable,
  kDegenerateOutput,
  kIllegalTransition,
  kSelectionNotOffered,
  kNoManagersConfigured,
  kNotAMember,
  kNotAManager,
  kUnknownFlow,
  kMalformedEvent,
  kCorruptJournal,
  kConfigError,
};

// Stable wire name, e.g. "StaleBase".
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace choir
