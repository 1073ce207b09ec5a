#pragma once

#include "choir/context_codec.hpp"
#include "choir/diff.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace choir {

struct TextBlock {
  std::string text;
  friend bool operator==(const TextBlock&, const TextBlock&) = default;
};

struct DiffBlock {
  std::string doc_path;
  EditDiff diff;
  friend bool operator==(const DiffBlock&, const DiffBlock&) = default;
};

struct Button {
  std::string action_id;  // e.g. "start_discussion"
  std::string label;
  std::string flow_id;
  friend bool operator==(const Button&, const Button&) = default;
};

struct ButtonRowBlock {
  std::vector<Button> buttons;
  friend bool operator==(const ButtonRowBlock&, const ButtonRowBlock&) = default;
};

struct MessageSelectBlock {
  std::string flow_id;
  std::vector<SourceMessage> messages;
  friend bool operator==(const MessageSelectBlock&, const MessageSelectBlock&) = default;
};

using Block = std::variant<TextBlock, DiffBlock, ButtonRowBlock, MessageSelectBlock>;

enum class ActionKind { kPostMessage, kEphemeralMessage, kOpenConversation, kInviteUser };

std::string_view action_kind_name(ActionKind kind);

struct ChatAction {
  std::string action_id;
  ActionKind kind = ActionKind::kPostMessage;
  // Channel or conversation id.
  std::string target;
  // Recipient of an ephemeral message, or the invitee.
  std::optional<std::string> user_id;
  // Initial members of an opened conversation.
  std::vector<std::string> members;
  std::vector<Block> blocks;
  // Assigned by the action stream; 0 until then.
  std::uint64_t seq = 0;

  friend bool operator==(const ChatAction&, const ChatAction&) = default;
};

// Button action ids understood by the gateway.
namespace button {
inline constexpr std::string_view kStartDiscussion = "start_discussion";
inline constexpr std::string_view kNextSuggestion = "next_suggestion";
inline constexpr std::string_view kCreateNewDocument = "create_new_document";
inline constexpr std::string_view kApprove = "approve";
inline constexpr std::string_view kReject = "reject";
inline constexpr std::string_view kRegenerate = "regenerate";
inline constexpr std::string_view kInvite = "invite";
inline constexpr std::string_view kHelpful = "helpful";
inline constexpr std::string_view kNotHelpful = "not_helpful";
inline constexpr std::string_view kUpdateFromDiscussion = "update_from_discussion";
}  // namespace button

nlohmann::json to_json(const SourceMessage& message);
SourceMessage source_message_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EditDiff& diff);
EditDiff edit_diff_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Block& block);
Block block_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ChatAction& action);
ChatAction chat_action_from_json(const nlohmann::json& j);

}  // namespace choir
