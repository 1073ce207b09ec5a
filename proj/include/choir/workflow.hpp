#pragma once

#include "choir/actions.hpp"
#include "choir/assistant.hpp"
#include "choir/ids.hpp"
#include "choir/knowledge_index.hpp"
#include "choir/repo_store.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace choir {

enum class Role { kRequester, kQuestioner, kManager };

enum class FlowKind { kUpdate, kQuestion };

enum class FlowState {
  // UpdateFlow
  kAwaitingSelection,
  kProposalShown,
  kDiscussionOpen,  // shared with QuestionFlow
  kAwaitingDecision,
  kApplied,
  kRejected,
  kAbandoned,
  // QuestionFlow
  kAsked,
  kAnswered,
  kResolved,
  kEscalatedToUpdate,
};

enum class FlowEvent {
  kSelectMessages,
  kNextSuggestion,
  kCreateNewDocument,
  kStartDiscussion,
  kContextPosted,
  kInviteParticipant,
  kApprove,
  kReject,
  kRegenerate,
  kExpire,
  kAnswerPosted,
  kHelpful,
  kNotHelpful,
  kSpawnUpdate,
};

std::string_view flow_kind_name(FlowKind kind);
std::string_view flow_state_name(FlowState state);
std::string_view flow_event_name(FlowEvent event);
FlowKind flow_kind_from_name(std::string_view name);
FlowState flow_state_from_name(std::string_view name);

const std::vector<FlowState>& states_of(FlowKind kind);
const std::vector<FlowEvent>& all_flow_events();
bool is_terminal(FlowState state);

// Allowed target states for (kind, state, event); empty means the pair is an
// IllegalTransition. Approve has two outcomes: Applied, or AwaitingDecision
// after a stale-base re-proposal.
std::vector<FlowState> allowed_transitions(FlowKind kind, FlowState state, FlowEvent event);

enum class ProposalState { kShown, kSuperseded, kInDiscussion, kApplied, kRejected, kStale };

std::string_view proposal_state_name(ProposalState state);

inline constexpr std::string_view kNewDocumentPrefix = "new:";

struct EditProposal {
  std::string proposal_id;
  // Existing path, or "new:<path>" for a document to be created.
  std::string doc_path;
  RevisionId base_revision;
  std::string base_content;
  std::string proposed_content;
  std::string change_title;
  std::vector<SourceMessage> source_messages;
  std::size_t candidate_rank = 0;
  ProposalState state = ProposalState::kShown;

  bool is_creation() const { return doc_path.rfind(kNewDocumentPrefix, 0) == 0; }
  // Path the commit will touch.
  std::string target_path() const { return is_creation() ? doc_path.substr(kNewDocumentPrefix.size()) : doc_path; }

  friend bool operator==(const EditProposal&, const EditProposal&) = default;
};

struct FlowInstance {
  std::string flow_id;
  FlowKind kind = FlowKind::kUpdate;
  FlowState state = FlowState::kAwaitingSelection;
  std::string channel_id;
  std::string initiator_id;
  std::optional<std::string> proposal_id;
  std::vector<std::string> proposal_history;
  std::size_t candidate_cursor = 0;
  std::optional<std::string> discussion_id;
  std::vector<std::string> members;
  std::int64_t created_at = 0;
  std::int64_t updated_at = 0;

  // UpdateFlow
  std::vector<SourceMessage> offered_messages;
  std::vector<SourceMessage> selected_messages;
  std::vector<std::string> ranked_documents;
  bool creation_offered = false;
  std::optional<std::string> change_summary;
  std::optional<RevisionId> applied_revision;
  std::optional<std::string> parent_flow_id;

  // QuestionFlow
  std::string question;
  std::string answer_text;
  std::vector<std::string> cited_chunks;
  std::optional<std::string> spawned_flow_id;

  friend bool operator==(const FlowInstance&, const FlowInstance&) = default;
};

nlohmann::json to_json(const EditProposal& proposal);
EditProposal edit_proposal_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FlowInstance& flow);
FlowInstance flow_instance_from_json(const nlohmann::json& j);

struct WorkflowConfig {
  std::vector<std::string> managers;
  std::size_t selection_window = 10;
  std::size_t answer_top_k = 4;
  double relevance_threshold = kDefaultRelevanceThreshold;
  std::int64_t flow_ttl_hours = 72;
};

// Identifies the event being processed: ids derive from it and `now` is
// used for timestamps and commit dates.
struct EventContext {
  IdSource& ids;
  std::int64_t now = 0;
};

struct TransitionRecord {
  std::string flow_id;
  FlowKind kind = FlowKind::kUpdate;
  FlowState from = FlowState::kAwaitingSelection;
  FlowEvent event = FlowEvent::kSelectMessages;
  FlowState to = FlowState::kAwaitingSelection;

  friend bool operator==(const TransitionRecord&, const TransitionRecord&) = default;
};

nlohmann::json to_json(const TransitionRecord& record);

// What one operation produced, for the caller to persist and publish.
struct Outcome {
  std::vector<ChatAction> actions;
  std::vector<TransitionRecord> transitions;
  std::vector<std::string> changed_flows;
  std::vector<std::string> changed_proposals;
};

enum class Decision { kApprove, kReject };

// The role-driven state machines: Requester update flow, Questioner Q&A flow,
// and the Manager decision inside a discussion. Not internally synchronized;
// the caller serializes events.
class WorkflowEngine {
 public:
  WorkflowEngine(RepositoryHandle& repo, KnowledgeIndex& index, const Assistant& assistant, WorkflowConfig config,
                 std::function<void()> on_repository_changed = {});

  // `recent_messages` is the channel/thread tail, newest last. The mention
  // itself (matched by `message_ts`) is appended when the client omitted it.
  Outcome handle_mention(EventContext& ctx, const std::string& channel_id, const std::string& user_id,
                         const std::string& text, const std::string& message_ts,
                         const std::vector<SourceMessage>& recent_messages);

  // Each selected entry is matched to the offered window by (channel_id, timestamp).
  Outcome select_messages(EventContext& ctx, const std::string& flow_id, const std::string& user_id,
                          const std::vector<SourceMessage>& selected);
  Outcome next_suggestion(EventContext& ctx, const std::string& flow_id, const std::string& user_id);
  Outcome create_new_document(EventContext& ctx, const std::string& flow_id, const std::string& user_id);
  Outcome start_discussion(EventContext& ctx, const std::string& flow_id, const std::string& user_id);
  Outcome invite_participant(EventContext& ctx, const std::string& flow_id, const std::string& inviter_id,
                             const std::string& invitee_id);
  Outcome manager_decide(EventContext& ctx, const std::string& flow_id, const std::string& user_id,
                         Decision decision);
  // Re-runs propose_edit with the discussion's messages appended.
  Outcome regenerate(EventContext& ctx, const std::string& flow_id, const std::string& user_id,
                     const std::vector<SourceMessage>& discussion_messages);

  Outcome handle_direct_question(EventContext& ctx, const std::string& channel_id, const std::string& user_id,
                                 const std::string& question);
  Outcome mark_helpful(EventContext& ctx, const std::string& flow_id, const std::string& user_id);
  Outcome escalate_question(EventContext& ctx, const std::string& flow_id, const std::string& user_id);
  Outcome spawn_update_from_discussion(EventContext& ctx, const std::string& question_flow_id,
                                       const std::string& user_id, const std::vector<SourceMessage>& messages);

  // Moves idle non-terminal UpdateFlows to Abandoned.
  Outcome sweep_idle(EventContext& ctx);

  const FlowInstance& flow(const std::string& flow_id) const;
  const FlowInstance* find_flow(const std::string& flow_id) const;
  const EditProposal& proposal(const std::string& proposal_id) const;
  const std::map<std::string, FlowInstance>& flows() const { return flows_; }
  const std::map<std::string, EditProposal>& proposals() const { return proposals_; }
  const WorkflowConfig& config() const { return config_; }

  bool is_manager(const std::string& user_id) const;

  // Replaces or inserts persisted state (journal replay).
  void restore(FlowInstance flow);
  void restore(EditProposal proposal);

 private:
  FlowInstance& mutable_flow(const std::string& flow_id);
  void transition(FlowInstance& flow, FlowEvent event, FlowState target, Outcome& out, std::int64_t now);
  void require(const FlowInstance& flow, FlowEvent event) const;
  void touch(const FlowInstance& flow, Outcome& out);
  void touch(const EditProposal& proposal, Outcome& out);

  EditProposal build_proposal(EventContext& ctx, const std::string& doc_path, std::size_t rank,
                              const std::vector<SourceMessage>& messages) const;
  EditProposal build_creation_proposal(EventContext& ctx, const FlowInstance& flow) const;
  EditProposal& install_proposal(FlowInstance& flow, EditProposal proposal, Outcome& out);
  void retire_current_proposal(FlowInstance& flow, ProposalState state, Outcome& out);
  ChatAction proposal_card(EventContext& ctx, const FlowInstance& flow, const EditProposal& proposal) const;
  ChatAction decision_card(EventContext& ctx, const FlowInstance& flow, const EditProposal& proposal,
                           const std::string& lead) const;
  ChatAction post(EventContext& ctx, const std::string& target, std::vector<Block> blocks) const;
  ChatAction ephemeral(EventContext& ctx, const std::string& target, const std::string& user,
                       std::vector<Block> blocks) const;
  FlowInstance& create_update_flow(EventContext& ctx, const std::string& channel_id, const std::string& user_id,
                                   const std::vector<SourceMessage>& window, Outcome& out);
  std::vector<std::string> conversation_members(const std::string& initiator) const;
  std::string unique_new_path(const std::string& slug) const;

  RepositoryHandle& repo_;
  KnowledgeIndex& index_;
  const Assistant& assistant_;
  WorkflowConfig config_;
  std::function<void()> on_repository_changed_;

  std::map<std::string, FlowInstance> flows_;
  std::map<std::string, EditProposal> proposals_;
  // Discussion conversation id -> owning flow id.
  std::map<std::string, std::string> conversations_;
};

}  // namespace choir
