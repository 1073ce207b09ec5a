#include "choir/error.hpp"

namespace choir {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNotARepository: return "NotARepository";
    case ErrorCode::kPermissionDenied: return "PermissionDenied";
    case ErrorCode::kDocumentNotFound: return "DocumentNotFound";
    case ErrorCode::kRevisionNotFound: return "RevisionNotFound";
    case ErrorCode::kStaleBase: return "StaleBase";
    case ErrorCode::kEmptyEdit: return "EmptyEdit";
    case ErrorCode::kMalformedTrailer: return "MalformedTrailer";
    case ErrorCode::kGitFailure: return "GitFailure";
    case ErrorCode::kProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::kDegenerateOutput: return "DegenerateOutput";
    case ErrorCode::kIllegalTransition: return "IllegalTransition";
    case ErrorCode::kSelectionNotOffered: return "SelectionNotOffered";
    case ErrorCode::kNoManagersConfigured: return "NoManagersConfigured";
    case ErrorCode::kNotAMember: return "NotAMember";
    case ErrorCode::kNotAManager: return "NotAManager";
    case ErrorCode::kUnknownFlow: return "UnknownFlow";
    case ErrorCode::kMalformedEvent: return "MalformedEvent";
    case ErrorCode::kCorruptJournal: return "CorruptJournal";
    case ErrorCode::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace choir
