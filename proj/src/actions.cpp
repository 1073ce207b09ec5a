#include "choir/actions.hpp"

#include "choir/error.hpp"

namespace choir {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

ActionKind action_kind_from_name(std::string_view name) {
  if (name == "post") return ActionKind::kPostMessage;
  if (name == "ephemeral") return ActionKind::kEphemeralMessage;
  if (name == "open_conversation") return ActionKind::kOpenConversation;
  if (name == "invite") return ActionKind::kInviteUser;
  throw Error(ErrorCode::kInvalidArgument, "unknown action kind " + std::string(name));
}

DiffOp diff_op_from_name(std::string_view name) {
  if (name == "keep") return DiffOp::kKeep;
  if (name == "delete") return DiffOp::kDelete;
  if (name == "insert") return DiffOp::kInsert;
  throw Error(ErrorCode::kInvalidArgument, "unknown diff op " + std::string(name));
}

}  // namespace

std::string_view action_kind_name(ActionKind kind) {
  switch (kind) {
    case ActionKind::kPostMessage: return "post";
    case ActionKind::kEphemeralMessage: return "ephemeral";
    case ActionKind::kOpenConversation: return "open_conversation";
    case ActionKind::kInviteUser: return "invite";
  }
  return "post";
}

json to_json(const SourceMessage& message) {
  return json{{"channel_id", message.channel_id},
              {"author_id", message.author_id},
              {"timestamp", message.timestamp},
              {"text", message.text}};
}

SourceMessage source_message_from_json(const json& j) {
  return SourceMessage{j.at("channel_id").get<std::string>(), j.at("author_id").get<std::string>(),
                       j.at("timestamp").get<std::string>(), j.at("text").get<std::string>()};
}

json to_json(const EditDiff& diff) {
  json hunks = json::array();
  for (const auto& hunk : diff.hunks) {
    hunks.push_back(json{{"op", std::string(diff_op_name(hunk.op))}, {"lines", hunk.lines}});
  }
  return hunks;
}

EditDiff edit_diff_from_json(const json& j) {
  EditDiff diff;
  for (const auto& hunk : j) {
    diff.hunks.push_back(
        DiffHunk{diff_op_from_name(hunk.at("op").get<std::string>()), hunk.at("lines").get<std::vector<std::string>>()});
  }
  return diff;
}

json to_json(const Block& block) {
  return std::visit(
      overloaded{
          [](const TextBlock& b) { return json{{"kind", "text"}, {"text", b.text}}; },
          [](const DiffBlock& b) { return json{{"kind", "diff"}, {"doc_path", b.doc_path}, {"hunks", to_json(b.diff)}}; },
          [](const ButtonRowBlock& b) {
            json buttons = json::array();
            for (const auto& button : b.buttons) {
              buttons.push_back(
                  json{{"action_id", button.action_id}, {"label", button.label}, {"flow_id", button.flow_id}});
            }
            return json{{"kind", "buttons"}, {"buttons", buttons}};
          },
          [](const MessageSelectBlock& b) {
            json messages = json::array();
            for (const auto& m : b.messages) messages.push_back(to_json(m));
            return json{{"kind", "message_select"}, {"flow_id", b.flow_id}, {"messages", messages}};
          },
      },
      block);
}

Block block_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "text") return TextBlock{j.at("text").get<std::string>()};
  if (kind == "diff") return DiffBlock{j.at("doc_path").get<std::string>(), edit_diff_from_json(j.at("hunks"))};
  if (kind == "buttons") {
    ButtonRowBlock row;
    for (const auto& b : j.at("buttons")) {
      row.buttons.push_back(Button{b.at("action_id").get<std::string>(), b.at("label").get<std::string>(),
                                   b.at("flow_id").get<std::string>()});
    }
    return row;
  }
  if (kind == "message_select") {
    MessageSelectBlock select{j.at("flow_id").get<std::string>(), {}};
    for (const auto& m : j.at("messages")) select.messages.push_back(source_message_from_json(m));
    return select;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown block kind " + kind);
}

json to_json(const ChatAction& action) {
  json blocks = json::array();
  for (const auto& block : action.blocks) blocks.push_back(to_json(block));
  json out = {{"action_id", action.action_id},
              {"kind", std::string(action_kind_name(action.kind))},
              {"target", action.target},
              {"blocks", blocks}};
  if (action.user_id) out["user_id"] = *action.user_id;
  if (!action.members.empty()) out["members"] = action.members;
  if (action.seq != 0) out["seq"] = action.seq;
  return out;
}

ChatAction chat_action_from_json(const json& j) {
  ChatAction action;
  action.action_id = j.at("action_id").get<std::string>();
  action.kind = action_kind_from_name(j.at("kind").get<std::string>());
  action.target = j.at("target").get<std::string>();
  if (j.contains("user_id")) action.user_id = j.at("user_id").get<std::string>();
  if (j.contains("members")) action.members = j.at("members").get<std::vector<std::string>>();
  for (const auto& block : j.at("blocks")) action.blocks.push_back(block_from_json(block));
  action.seq = j.value("seq", std::uint64_t{0});
  return action;
}

}  // namespace choir
