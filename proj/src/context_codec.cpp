#include "choir/context_codec.hpp"

#include "choir/error.hpp"

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include <array>
#include <map>

namespace choir {
namespace {

using ordered_json = nlohmann::ordered_json;

bool has_line_break(std::string_view text) {
  return text.find_first_of("\r\n") != std::string_view::npos;
}

void require_single_line(std::string_view what, std::string_view value) {
  if (value.empty()) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " is empty");
  if (has_line_break(value)) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " contains a line break");
}

bool is_base64_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '+' || c == '/';
}

std::string require_string(const nlohmann::json& object, const char* key) {
  const auto it = object.find(key);
  if (it == object.end() || !it->is_string()) {
    throw Error(ErrorCode::kMalformedTrailer, std::string("context payload lacks string field '") + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::optional<std::string> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) return std::nullopt;
  std::size_t padding = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '=') {
      if (i + 2 < text.size()) return std::nullopt;
      ++padding;
    } else if (padding != 0 || !is_base64_char(c)) {
      return std::nullopt;
    }
  }
  if (text.empty()) return std::string();
  std::string out(3 * text.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) return std::nullopt;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

std::string canonical_context_json(const ConversationContext& context) {
  ordered_json messages = ordered_json::array();
  for (const auto& message : context.messages) {
    ordered_json entry;
    entry["channel_id"] = message.channel_id;
    entry["author_id"] = message.author_id;
    entry["timestamp"] = message.timestamp;
    entry["text"] = message.text;
    messages.push_back(std::move(entry));
  }
  ordered_json payload;
  payload["messages"] = std::move(messages);
  payload["summary"] = context.summary ? ordered_json(*context.summary) : ordered_json(nullptr);
  try {
    return payload.dump();
  } catch (const nlohmann::json::type_error& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("context is not valid UTF-8: ") + e.what());
  }
}

std::string encode_context(const ConversationContext& context) {
  require_single_line("proposal id", context.proposal_id);
  require_single_line("requester id", context.requester_id);
  require_single_line("approver id", context.approver_id);
  for (const auto& message : context.messages) {
    if (message.channel_id.empty() || message.author_id.empty() || message.timestamp.empty() ||
        message.text.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "source message fields must be non-empty");
    }
  }
  std::string out;
  out.append(kTrailerProposalId).append(": ").append(context.proposal_id).append("\n");
  out.append(kTrailerRequester).append(": ").append(context.requester_id).append("\n");
  out.append(kTrailerApprover).append(": ").append(context.approver_id).append("\n");
  out.append(kTrailerContext).append(": ").append(base64_encode(canonical_context_json(context))).append("\n");
  return out;
}

std::string encode_commit_message(CommitKind kind, std::string_view path, std::string_view title,
                                  const ConversationContext& context) {
  require_single_line("path", path);
  require_single_line("change title", title);
  std::string out = kind == CommitKind::kCreate ? "choir: create " : "choir: update ";
  out.append(path).append("\n\n").append(title).append("\n\n");
  out.append(encode_context(context));
  return out;
}

std::optional<ConversationContext> decode_context(std::string_view message) {
  while (!message.empty() && (message.back() == '\n' || message.back() == '\r')) message.remove_suffix(1);
  // Trailers live in the final paragraph.
  const auto blank = message.rfind("\n\n");
  std::string_view block = blank == std::string_view::npos ? message : message.substr(blank + 2);

  static constexpr std::array<std::string_view, 4> kKeys = {kTrailerProposalId, kTrailerRequester,
                                                             kTrailerApprover, kTrailerContext};
  std::map<std::string_view, std::string_view> values;
  bool any = false;
  while (!block.empty()) {
    const auto eol = block.find('\n');
    std::string_view line = block.substr(0, eol);
    block = eol == std::string_view::npos ? std::string_view() : block.substr(eol + 1);
    for (const auto key : kKeys) {
      if (line.size() > key.size() && line.substr(0, key.size()) == key && line[key.size()] == ':') {
        any = true;
        std::string_view value = line.substr(key.size() + 1);
        if (!value.empty() && value.front() == ' ') value.remove_prefix(1);
        if (values.count(key) != 0) throw Error(ErrorCode::kMalformedTrailer, "duplicate trailer " + std::string(key));
        values[key] = value;
      }
    }
  }
  if (!any) return std::nullopt;
  for (const auto key : kKeys) {
    if (values.count(key) == 0) throw Error(ErrorCode::kMalformedTrailer, "missing trailer " + std::string(key));
  }

  const auto raw = base64_decode(values[kTrailerContext]);
  if (!raw) throw Error(ErrorCode::kMalformedTrailer, "Choir-Context is not valid base64");
  nlohmann::json payload;
  try {
    payload = nlohmann::json::parse(*raw);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedTrailer, std::string("Choir-Context is not valid JSON: ") + e.what());
  }
  if (!payload.is_object() || !payload.contains("messages") || !payload["messages"].is_array()) {
    throw Error(ErrorCode::kMalformedTrailer, "context payload lacks a messages array");
  }

  ConversationContext context;
  context.proposal_id = std::string(values[kTrailerProposalId]);
  context.requester_id = std::string(values[kTrailerRequester]);
  context.approver_id = std::string(values[kTrailerApprover]);
  for (const auto& entry : payload["messages"]) {
    if (!entry.is_object()) throw Error(ErrorCode::kMalformedTrailer, "context message is not an object");
    context.messages.push_back(SourceMessage{require_string(entry, "channel_id"), require_string(entry, "author_id"),
                                             require_string(entry, "timestamp"), require_string(entry, "text")});
  }
  const auto summary = payload.find("summary");
  if (summary != payload.end() && !summary->is_null()) {
    if (!summary->is_string()) throw Error(ErrorCode::kMalformedTrailer, "summary is not a string");
    context.summary = summary->get<std::string>();
  }
  return context;
}

}  // namespace choir
