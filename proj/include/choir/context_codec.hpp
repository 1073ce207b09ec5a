#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace choir {

// One chat message a user selected as the source of a document change.
struct SourceMessage {
  std::string channel_id;
  std::string author_id;
  std::string timestamp;
  std::string text;

  friend bool operator==(const SourceMessage&, const SourceMessage&) = default;
};

// The conversation that produced a revision, stored in the commit message.
struct ConversationContext {
  std::string proposal_id;
  std::string requester_id;
  std::string approver_id;
  std::vector<SourceMessage> messages;
  std::optional<std::string> summary;

  friend bool operator==(const ConversationContext&, const ConversationContext&) = default;
};

enum class CommitKind { kUpdate, kCreate };

// Trailer keys, in emission order.
inline constexpr std::string_view kTrailerProposalId = "Choir-Proposal-Id";
inline constexpr std::string_view kTrailerRequester = "Choir-Requester";
inline constexpr std::string_view kTrailerApprover = "Choir-Approver";
inline constexpr std::string_view kTrailerContext = "Choir-Context";

// Canonical JSON payload: {"messages":[{channel_id,author_id,timestamp,text}...],"summary":...}
// with keys in that order and no insignificant whitespace.
std::string canonical_context_json(const ConversationContext& context);

// Only the trailer block (four lines, each newline-terminated).
std::string encode_context(const ConversationContext& context);

// Full commit message:
//   choir: update <path>\n\n<title>\n\n<trailers>
// Throws Error(kInvalidArgument) if ids or title contain line breaks or a
// message field is empty.
std::string encode_commit_message(CommitKind kind, std::string_view path, std::string_view title,
                                  const ConversationContext& context);

// Returns nullopt when the message carries no Choir-* trailers. Throws
// Error(kMalformedTrailer) when trailers are present but incomplete or the
// payload cannot be decoded.
std::optional<ConversationContext> decode_context(std::string_view message);

std::string base64_encode(std::string_view bytes);
// Strict: rejects characters outside the alphabet and bad padding.
std::optional<std::string> base64_decode(std::string_view text);

}  // namespace choir
