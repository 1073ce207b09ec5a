#pragma once

#include "choir/context_codec.hpp"
#include "choir/diff.hpp"
#include "choir/knowledge_index.hpp"
#include "choir/repo_store.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace choir {

enum class AssistantTask { kProposeEdit, kAnswerQuestion, kSummarizeContext, kSummarizeChange };

std::string_view assistant_task_name(AssistantTask task);

struct ProviderRequest {
  AssistantTask task = AssistantTask::kProposeEdit;
  nlohmann::json inputs;
};

struct ProviderResponse {
  std::string text;
  std::optional<std::string> title;
  std::optional<std::vector<std::string>> cited_chunks;
  bool no_source = false;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ProviderResponse complete(const ProviderRequest& request) const = 0;
};

// Deterministic stand-in for a language model.
//
// propose_edit:
//   kAppendBullets  each message becomes "* <text>" at the end of the section
//                   whose text is most similar to it (hashed embedding cosine);
//                   an empty document gets a title heading first.
//   kEchoDocument   returns the document unchanged.
//   kEmpty          returns "".
// answer_question: quotes the first (highest scoring) grounding chunk verbatim.
// summarize_context: "Context from <k> prior revision(s):" followed by one
//   line per revision, newest first.
// summarize_change: "+N/−M lines in <sections>".
struct ScriptedRules {
  enum class EditRule { kAppendBullets, kEchoDocument, kEmpty };
  EditRule edit = EditRule::kAppendBullets;
  // Simulates an outage: every call raises ProviderUnavailable.
  bool unavailable = false;
};

class ScriptedProvider final : public Provider {
 public:
  explicit ScriptedProvider(ScriptedRules rules = {}) : rules_(rules) {}
  ProviderResponse complete(const ProviderRequest& request) const override;

 private:
  ScriptedRules rules_;
};

// Loads `<dir>/<task>.txt` templates; placeholders are {{document}},
// {{messages}}, {{question}}, {{chunks}}, {{history}} and {{diff}}.
class PromptTemplates {
 public:
  static PromptTemplates load(const std::filesystem::path& dir);
  std::string render(AssistantTask task, const std::map<std::string, std::string>& values) const;

 private:
  std::map<AssistantTask, std::string> templates_;
};

struct RemoteProviderConfig {
  std::string endpoint;
  std::string model;
  std::string api_key;
  double timeout_secs = 30.0;
};

// POSTs {"task","model","prompt","inputs"} and reads {"text"[,"title"][,"cited_chunks"]}.
class RemoteProvider final : public Provider {
 public:
  RemoteProvider(RemoteProviderConfig config, PromptTemplates templates);
  ProviderResponse complete(const ProviderRequest& request) const override;

 private:
  RemoteProviderConfig config_;
  PromptTemplates templates_;
};

struct ProposedEdit {
  std::string content;
  std::string change_title;
};

struct Answer {
  std::string text;
  std::vector<std::string> cited_chunks;
  bool no_source = false;
};

inline constexpr std::string_view kNoPriorContext = "No prior revision context.";

// Task-shaped facade over a Provider; validates provider output.
class Assistant {
 public:
  explicit Assistant(std::shared_ptr<const Provider> provider) : provider_(std::move(provider)) {}

  ProposedEdit propose_edit(const DocumentFile& document, const std::vector<SourceMessage>& messages) const;
  Answer answer_question(std::string_view question, const std::vector<ScoredChunk>& grounding) const;
  std::string summarize_context(const std::vector<RevisionRecord>& records) const;
  std::string summarize_change(std::string_view base_content, std::string_view proposed_content) const;

 private:
  std::shared_ptr<const Provider> provider_;
};

// Mention prefixes such as "@CHOIR" removed, whitespace runs collapsed.
std::string clean_message_text(std::string_view text);

// "We aim for a decision to ..." -> "we-aim-for-a-decision.md".
std::string slug_for(std::string_view text, std::size_t max_words = 5);

}  // namespace choir
