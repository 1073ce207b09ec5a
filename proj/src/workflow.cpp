#include "choir/workflow.hpp"

#include "choir/error.hpp"

#include <algorithm>
#include <array>

namespace choir {

using nlohmann::json;

namespace {

struct StateName {
  FlowState state;
  std::string_view name;
};

constexpr std::array<StateName, 11> kStateNames = {{
    {FlowState::kAwaitingSelection, "AwaitingSelection"},
    {FlowState::kProposalShown, "ProposalShown"},
    {FlowState::kDiscussionOpen, "DiscussionOpen"},
    {FlowState::kAwaitingDecision, "AwaitingDecision"},
    {FlowState::kApplied, "Applied"},
    {FlowState::kRejected, "Rejected"},
    {FlowState::kAbandoned, "Abandoned"},
    {FlowState::kAsked, "Asked"},
    {FlowState::kAnswered, "Answered"},
    {FlowState::kResolved, "Resolved"},
    {FlowState::kEscalatedToUpdate, "EscalatedToUpdate"},
}};

bool same_message(const SourceMessage& a, const SourceMessage& b) {
  return a.channel_id == b.channel_id && a.timestamp == b.timestamp;
}

std::string short_revision(const RevisionId& revision) { return revision.substr(0, 8); }

std::string join(const std::vector<std::string>& items, std::string_view separator) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += separator;
    out += item;
  }
  return out;
}

std::vector<SourceMessage> tail(const std::vector<SourceMessage>& messages, std::size_t n) {
  if (messages.size() <= n) return messages;
  return {messages.end() - static_cast<std::ptrdiff_t>(n), messages.end()};
}

json optional_json(const std::optional<std::string>& value) { return value ? json(*value) : json(nullptr); }

std::optional<std::string> optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

json messages_json(const std::vector<SourceMessage>& messages) {
  json out = json::array();
  for (const auto& m : messages) out.push_back(to_json(m));
  return out;
}

std::vector<SourceMessage> messages_from_json(const json& j) {
  std::vector<SourceMessage> out;
  for (const auto& m : j) out.push_back(source_message_from_json(m));
  return out;
}

ProposalState proposal_state_from_name(std::string_view name) {
  for (const auto state : {ProposalState::kShown, ProposalState::kSuperseded, ProposalState::kInDiscussion,
                           ProposalState::kApplied, ProposalState::kRejected, ProposalState::kStale}) {
    if (proposal_state_name(state) == name) return state;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown proposal state " + std::string(name));
}

}  // namespace

std::string_view flow_kind_name(FlowKind kind) { return kind == FlowKind::kUpdate ? "UpdateFlow" : "QuestionFlow"; }

FlowKind flow_kind_from_name(std::string_view name) {
  if (name == "UpdateFlow") return FlowKind::kUpdate;
  if (name == "QuestionFlow") return FlowKind::kQuestion;
  throw Error(ErrorCode::kInvalidArgument, "unknown flow kind " + std::string(name));
}

std::string_view flow_state_name(FlowState state) {
  for (const auto& entry : kStateNames) {
    if (entry.state == state) return entry.name;
  }
  return "Unknown";
}

FlowState flow_state_from_name(std::string_view name) {
  for (const auto& entry : kStateNames) {
    if (entry.name == name) return entry.state;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown flow state " + std::string(name));
}

std::string_view flow_event_name(FlowEvent event) {
  switch (event) {
    case FlowEvent::kSelectMessages: return "SelectMessages";
    case FlowEvent::kNextSuggestion: return "NextSuggestion";
    case FlowEvent::kCreateNewDocument: return "CreateNewDocument";
    case FlowEvent::kStartDiscussion: return "StartDiscussion";
    case FlowEvent::kContextPosted: return "ContextPosted";
    case FlowEvent::kInviteParticipant: return "InviteParticipant";
    case FlowEvent::kApprove: return "Approve";
    case FlowEvent::kReject: return "Reject";
    case FlowEvent::kRegenerate: return "Regenerate";
    case FlowEvent::kExpire: return "Expire";
    case FlowEvent::kAnswerPosted: return "AnswerPosted";
    case FlowEvent::kHelpful: return "Helpful";
    case FlowEvent::kNotHelpful: return "NotHelpful";
    case FlowEvent::kSpawnUpdate: return "SpawnUpdate";
  }
  return "Unknown";
}

std::string_view proposal_state_name(ProposalState state) {
  switch (state) {
    case ProposalState::kShown: return "Shown";
    case ProposalState::kSuperseded: return "Superseded";
    case ProposalState::kInDiscussion: return "InDiscussion";
    case ProposalState::kApplied: return "Applied";
    case ProposalState::kRejected: return "Rejected";
    case ProposalState::kStale: return "Stale";
  }
  return "Unknown";
}

const std::vector<FlowState>& states_of(FlowKind kind) {
  static const std::vector<FlowState> update = {
      FlowState::kAwaitingSelection, FlowState::kProposalShown, FlowState::kDiscussionOpen,
      FlowState::kAwaitingDecision,  FlowState::kApplied,       FlowState::kRejected,
      FlowState::kAbandoned};
  static const std::vector<FlowState> question = {FlowState::kAsked, FlowState::kAnswered, FlowState::kDiscussionOpen,
                                                  FlowState::kResolved, FlowState::kEscalatedToUpdate};
  return kind == FlowKind::kUpdate ? update : question;
}

const std::vector<FlowEvent>& all_flow_events() {
  static const std::vector<FlowEvent> events = {
      FlowEvent::kSelectMessages, FlowEvent::kNextSuggestion,    FlowEvent::kCreateNewDocument,
      FlowEvent::kStartDiscussion, FlowEvent::kContextPosted,    FlowEvent::kInviteParticipant,
      FlowEvent::kApprove,         FlowEvent::kReject,           FlowEvent::kRegenerate,
      FlowEvent::kExpire,          FlowEvent::kAnswerPosted,     FlowEvent::kHelpful,
      FlowEvent::kNotHelpful,      FlowEvent::kSpawnUpdate};
  return events;
}

bool is_terminal(FlowState state) {
  switch (state) {
    case FlowState::kApplied:
    case FlowState::kRejected:
    case FlowState::kAbandoned:
    case FlowState::kResolved:
    case FlowState::kEscalatedToUpdate:
      return true;
    default:
      return false;
  }
}

std::vector<FlowState> allowed_transitions(FlowKind kind, FlowState state, FlowEvent event) {
  using S = FlowState;
  using E = FlowEvent;
  if (kind == FlowKind::kUpdate) {
    switch (state) {
      case S::kAwaitingSelection:
        if (event == E::kSelectMessages) return {S::kProposalShown};
        if (event == E::kExpire) return {S::kAbandoned};
        return {};
      case S::kProposalShown:
        if (event == E::kNextSuggestion || event == E::kCreateNewDocument) return {S::kProposalShown};
        if (event == E::kStartDiscussion) return {S::kDiscussionOpen};
        if (event == E::kExpire) return {S::kAbandoned};
        return {};
      case S::kDiscussionOpen:
        if (event == E::kContextPosted) return {S::kAwaitingDecision};
        if (event == E::kInviteParticipant) return {S::kDiscussionOpen};
        if (event == E::kExpire) return {S::kAbandoned};
        return {};
      case S::kAwaitingDecision:
        if (event == E::kInviteParticipant || event == E::kRegenerate) return {S::kAwaitingDecision};
        if (event == E::kApprove) return {S::kApplied, S::kAwaitingDecision};
        if (event == E::kReject) return {S::kRejected};
        if (event == E::kExpire) return {S::kAbandoned};
        return {};
      default:
        return {};
    }
  }
  switch (state) {
    case S::kAsked:
      if (event == E::kAnswerPosted) return {S::kAnswered};
      return {};
    case S::kAnswered:
      if (event == E::kHelpful) return {S::kResolved};
      if (event == E::kNotHelpful) return {S::kDiscussionOpen};
      return {};
    case S::kDiscussionOpen:
      if (event == E::kInviteParticipant) return {S::kDiscussionOpen};
      if (event == E::kSpawnUpdate) return {S::kEscalatedToUpdate};
      return {};
    default:
      return {};
  }
}

json to_json(const TransitionRecord& r) {
  return json{{"flow_id", r.flow_id},
              {"kind", std::string(flow_kind_name(r.kind))},
              {"from", std::string(flow_state_name(r.from))},
              {"event", std::string(flow_event_name(r.event))},
              {"to", std::string(flow_state_name(r.to))}};
}

json to_json(const EditProposal& p) {
  return json{{"proposal_id", p.proposal_id},
              {"doc_path", p.doc_path},
              {"base_revision", p.base_revision},
              {"base_content", p.base_content},
              {"proposed_content", p.proposed_content},
              {"change_title", p.change_title},
              {"source_messages", messages_json(p.source_messages)},
              {"candidate_rank", p.candidate_rank},
              {"state", std::string(proposal_state_name(p.state))}};
}

EditProposal edit_proposal_from_json(const json& j) {
  EditProposal p;
  p.proposal_id = j.at("proposal_id").get<std::string>();
  p.doc_path = j.at("doc_path").get<std::string>();
  p.base_revision = j.at("base_revision").get<std::string>();
  p.base_content = j.at("base_content").get<std::string>();
  p.proposed_content = j.at("proposed_content").get<std::string>();
  p.change_title = j.at("change_title").get<std::string>();
  p.source_messages = messages_from_json(j.at("source_messages"));
  p.candidate_rank = j.at("candidate_rank").get<std::size_t>();
  p.state = proposal_state_from_name(j.at("state").get<std::string>());
  return p;
}

json to_json(const FlowInstance& f) {
  return json{{"flow_id", f.flow_id},
              {"kind", std::string(flow_kind_name(f.kind))},
              {"state", std::string(flow_state_name(f.state))},
              {"channel_id", f.channel_id},
              {"initiator_id", f.initiator_id},
              {"proposal_id", optional_json(f.proposal_id)},
              {"proposal_history", f.proposal_history},
              {"candidate_cursor", f.candidate_cursor},
              {"discussion_id", optional_json(f.discussion_id)},
              {"members", f.members},
              {"created_at", f.created_at},
              {"updated_at", f.updated_at},
              {"offered_messages", messages_json(f.offered_messages)},
              {"selected_messages", messages_json(f.selected_messages)},
              {"ranked_documents", f.ranked_documents},
              {"creation_offered", f.creation_offered},
              {"change_summary", optional_json(f.change_summary)},
              {"applied_revision", optional_json(f.applied_revision)},
              {"parent_flow_id", optional_json(f.parent_flow_id)},
              {"question", f.question},
              {"answer_text", f.answer_text},
              {"cited_chunks", f.cited_chunks},
              {"spawned_flow_id", optional_json(f.spawned_flow_id)}};
}

FlowInstance flow_instance_from_json(const json& j) {
  FlowInstance f;
  f.flow_id = j.at("flow_id").get<std::string>();
  f.kind = flow_kind_from_name(j.at("kind").get<std::string>());
  f.state = flow_state_from_name(j.at("state").get<std::string>());
  f.channel_id = j.at("channel_id").get<std::string>();
  f.initiator_id = j.at("initiator_id").get<std::string>();
  f.proposal_id = optional_string(j, "proposal_id");
  f.proposal_history = j.at("proposal_history").get<std::vector<std::string>>();
  f.candidate_cursor = j.at("candidate_cursor").get<std::size_t>();
  f.discussion_id = optional_string(j, "discussion_id");
  f.members = j.at("members").get<std::vector<std::string>>();
  f.created_at = j.at("created_at").get<std::int64_t>();
  f.updated_at = j.at("updated_at").get<std::int64_t>();
  f.offered_messages = messages_from_json(j.at("offered_messages"));
  f.selected_messages = messages_from_json(j.at("selected_messages"));
  f.ranked_documents = j.at("ranked_documents").get<std::vector<std::string>>();
  f.creation_offered = j.at("creation_offered").get<bool>();
  f.change_summary = optional_string(j, "change_summary");
  f.applied_revision = optional_string(j, "applied_revision");
  f.parent_flow_id = optional_string(j, "parent_flow_id");
  f.question = j.at("question").get<std::string>();
  f.answer_text = j.at("answer_text").get<std::string>();
  f.cited_chunks = j.at("cited_chunks").get<std::vector<std::string>>();
  f.spawned_flow_id = optional_string(j, "spawned_flow_id");
  return f;
}

WorkflowEngine::WorkflowEngine(RepositoryHandle& repo, KnowledgeIndex& index, const Assistant& assistant,
                               WorkflowConfig config, std::function<void()> on_repository_changed)
    : repo_(repo),
      index_(index),
      assistant_(assistant),
      config_(std::move(config)),
      on_repository_changed_(std::move(on_repository_changed)) {}

bool WorkflowEngine::is_manager(const std::string& user_id) const {
  return std::find(config_.managers.begin(), config_.managers.end(), user_id) != config_.managers.end();
}

const FlowInstance* WorkflowEngine::find_flow(const std::string& flow_id) const {
  const auto it = flows_.find(flow_id);
  return it == flows_.end() ? nullptr : &it->second;
}

const FlowInstance& WorkflowEngine::flow(const std::string& flow_id) const {
  const auto* found = find_flow(flow_id);
  if (found == nullptr) throw Error(ErrorCode::kUnknownFlow, "unknown flow " + flow_id);
  return *found;
}

FlowInstance& WorkflowEngine::mutable_flow(const std::string& flow_id) {
  const auto it = flows_.find(flow_id);
  if (it == flows_.end()) throw Error(ErrorCode::kUnknownFlow, "unknown flow " + flow_id);
  return it->second;
}

const EditProposal& WorkflowEngine::proposal(const std::string& proposal_id) const {
  const auto it = proposals_.find(proposal_id);
  if (it == proposals_.end()) throw Error(ErrorCode::kInvalidArgument, "unknown proposal " + proposal_id);
  return it->second;
}

void WorkflowEngine::restore(FlowInstance flow) {
  if (flow.discussion_id) conversations_[*flow.discussion_id] = flow.flow_id;
  flows_[flow.flow_id] = std::move(flow);
}

void WorkflowEngine::restore(EditProposal proposal) { proposals_[proposal.proposal_id] = std::move(proposal); }

void WorkflowEngine::require(const FlowInstance& flow, FlowEvent event) const {
  if (allowed_transitions(flow.kind, flow.state, event).empty()) {
    throw Error(ErrorCode::kIllegalTransition, std::string(flow_event_name(event)) + " is not allowed in " +
                                                   std::string(flow_state_name(flow.state)) + " (" +
                                                   std::string(flow_kind_name(flow.kind)) + " " + flow.flow_id + ")");
  }
}

void WorkflowEngine::transition(FlowInstance& flow, FlowEvent event, FlowState target, Outcome& out,
                                std::int64_t now) {
  const auto allowed = allowed_transitions(flow.kind, flow.state, event);
  if (std::find(allowed.begin(), allowed.end(), target) == allowed.end()) {
    throw Error(ErrorCode::kIllegalTransition, std::string(flow_event_name(event)) + ": " +
                                                   std::string(flow_state_name(flow.state)) + " -> " +
                                                   std::string(flow_state_name(target)) + " is not in the table");
  }
  out.transitions.push_back(TransitionRecord{flow.flow_id, flow.kind, flow.state, event, target});
  flow.state = target;
  flow.updated_at = now;
  touch(flow, out);
}

void WorkflowEngine::touch(const FlowInstance& flow, Outcome& out) {
  if (std::find(out.changed_flows.begin(), out.changed_flows.end(), flow.flow_id) == out.changed_flows.end()) {
    out.changed_flows.push_back(flow.flow_id);
  }
}

void WorkflowEngine::touch(const EditProposal& proposal, Outcome& out) {
  if (std::find(out.changed_proposals.begin(), out.changed_proposals.end(), proposal.proposal_id) ==
      out.changed_proposals.end()) {
    out.changed_proposals.push_back(proposal.proposal_id);
  }
}

ChatAction WorkflowEngine::post(EventContext& ctx, const std::string& target, std::vector<Block> blocks) const {
  ChatAction action;
  action.action_id = ctx.ids.next();
  action.kind = ActionKind::kPostMessage;
  action.target = target;
  action.blocks = std::move(blocks);
  return action;
}

ChatAction WorkflowEngine::ephemeral(EventContext& ctx, const std::string& target, const std::string& user,
                                     std::vector<Block> blocks) const {
  ChatAction action = post(ctx, target, std::move(blocks));
  action.kind = ActionKind::kEphemeralMessage;
  action.user_id = user;
  return action;
}

std::vector<std::string> WorkflowEngine::conversation_members(const std::string& initiator) const {
  std::vector<std::string> members = {initiator};
  for (const auto& manager : config_.managers) {
    if (std::find(members.begin(), members.end(), manager) == members.end()) members.push_back(manager);
  }
  return members;
}

std::string WorkflowEngine::unique_new_path(const std::string& slug) const {
  if (!repo_.exists(slug)) return slug;
  const auto stem = slug.substr(0, slug.size() - 3);
  for (int n = 2;; ++n) {
    const auto candidate = stem + "-" + std::to_string(n) + ".md";
    if (!repo_.exists(candidate)) return candidate;
  }
}

EditProposal WorkflowEngine::build_proposal(EventContext& ctx, const std::string& doc_path, std::size_t rank,
                                            const std::vector<SourceMessage>& messages) const {
  EditProposal proposal;
  proposal.doc_path = doc_path;
  proposal.base_revision = repo_.head();
  proposal.candidate_rank = rank;
  proposal.source_messages = messages;

  DocumentFile document;
  if (proposal.is_creation()) {
    document = DocumentFile{proposal.target_path(), "", proposal.base_revision};
  } else {
    document = repo_.read_document(doc_path, proposal.base_revision);
  }
  auto edit = assistant_.propose_edit(document, messages);
  proposal.base_content = document.content;
  proposal.proposed_content = std::move(edit.content);
  proposal.change_title = std::move(edit.change_title);
  proposal.proposal_id = ctx.ids.next();
  return proposal;
}

EditProposal WorkflowEngine::build_creation_proposal(EventContext& ctx, const FlowInstance& flow) const {
  const auto& first = flow.selected_messages.empty() ? flow.offered_messages.back() : flow.selected_messages.front();
  const auto path = unique_new_path(slug_for(first.text));
  return build_proposal(ctx, std::string(kNewDocumentPrefix) + path, flow.ranked_documents.size(),
                        flow.selected_messages);
}

void WorkflowEngine::retire_current_proposal(FlowInstance& flow, ProposalState state, Outcome& out) {
  if (!flow.proposal_id) return;
  auto& current = proposals_.at(*flow.proposal_id);
  current.state = state;
  touch(current, out);
  flow.proposal_id.reset();
}

EditProposal& WorkflowEngine::install_proposal(FlowInstance& flow, EditProposal proposal, Outcome& out) {
  retire_current_proposal(flow, ProposalState::kSuperseded, out);
  const auto id = proposal.proposal_id;
  auto& stored = proposals_[id] = std::move(proposal);
  flow.proposal_id = id;
  flow.proposal_history.push_back(id);
  touch(stored, out);
  touch(flow, out);
  return stored;
}

ChatAction WorkflowEngine::proposal_card(EventContext& ctx, const FlowInstance& flow,
                                         const EditProposal& proposal) const {
  std::vector<Block> blocks;
  blocks.push_back(TextBlock{"Document Updates Suggestion"});
  blocks.push_back(TextBlock{"File: " + proposal.target_path() + (proposal.is_creation() ? " (new document)" : "")});
  blocks.push_back(DiffBlock{proposal.doc_path, diff_documents(proposal.base_content, proposal.proposed_content)});
  blocks.push_back(ButtonRowBlock{{
      Button{std::string(button::kStartDiscussion), "Start Discussion", flow.flow_id},
      Button{std::string(button::kNextSuggestion), "Next Suggestion", flow.flow_id},
  }});
  return ephemeral(ctx, flow.channel_id, flow.initiator_id, std::move(blocks));
}

ChatAction WorkflowEngine::decision_card(EventContext& ctx, const FlowInstance& flow, const EditProposal& proposal,
                                         const std::string& lead) const {
  std::vector<Block> blocks;
  blocks.push_back(TextBlock{lead});
  blocks.push_back(TextBlock{"File: " + proposal.target_path() + " | " + proposal.change_title});
  blocks.push_back(DiffBlock{proposal.doc_path, diff_documents(proposal.base_content, proposal.proposed_content)});
  blocks.push_back(ButtonRowBlock{{
      Button{std::string(button::kApprove), "Approve", flow.flow_id},
      Button{std::string(button::kReject), "Reject", flow.flow_id},
      Button{std::string(button::kRegenerate), "Regenerate from this discussion", flow.flow_id},
  }});
  return post(ctx, *flow.discussion_id, std::move(blocks));
}

FlowInstance& WorkflowEngine::create_update_flow(EventContext& ctx, const std::string& channel_id,
                                                 const std::string& user_id,
                                                 const std::vector<SourceMessage>& window, Outcome& out) {
  FlowInstance flow;
  flow.flow_id = ctx.ids.next();
  flow.kind = FlowKind::kUpdate;
  flow.state = FlowState::kAwaitingSelection;
  flow.channel_id = channel_id;
  flow.initiator_id = user_id;
  flow.offered_messages = window;
  flow.created_at = ctx.now;
  flow.updated_at = ctx.now;
  const auto id = flow.flow_id;
  auto& stored = flows_[id] = std::move(flow);
  touch(stored, out);
  out.actions.push_back(ephemeral(ctx, channel_id, user_id,
                                  {TextBlock{"Select Messages to Save"}, MessageSelectBlock{id, window}}));
  return stored;
}

Outcome WorkflowEngine::handle_mention(EventContext& ctx, const std::string& channel_id, const std::string& user_id,
                                       const std::string& text, const std::string& message_ts,
                                       const std::vector<SourceMessage>& recent_messages) {
  std::vector<SourceMessage> window = recent_messages;
  const SourceMessage mention{channel_id, user_id, message_ts.empty() ? std::to_string(ctx.now) : message_ts, text};
  if (window.empty() || !same_message(window.back(), mention)) {
    const auto existing = std::find_if(window.begin(), window.end(),
                                       [&](const SourceMessage& m) { return same_message(m, mention); });
    if (existing == window.end()) window.push_back(mention);
  }
  window = tail(window, config_.selection_window);

  const auto conversation = conversations_.find(channel_id);
  if (conversation != conversations_.end()) {
    const auto& owner = flow(conversation->second);
    if (owner.kind == FlowKind::kQuestion && owner.state == FlowState::kDiscussionOpen) {
      return spawn_update_from_discussion(ctx, owner.flow_id, user_id, window);
    }
  }

  Outcome out;
  create_update_flow(ctx, channel_id, user_id, window, out);
  return out;
}

Outcome WorkflowEngine::select_messages(EventContext& ctx, const std::string& flow_id, const std::string& user_id,
                                        const std::vector<SourceMessage>& selected) {
  (void)user_id;
  auto& flow = mutable_flow(flow_id);
  require(flow, FlowEvent::kSelectMessages);
  if (selected.empty()) throw Error(ErrorCode::kSelectionNotOffered, "no messages selected");
  for (const auto& pick : selected) {
    const bool offered = std::any_of(flow.offered_messages.begin(), flow.offered_messages.end(),
                                     [&](const SourceMessage& m) { return same_message(m, pick); });
    if (!offered) {
      throw Error(ErrorCode::kSelectionNotOffered,
                  "message " + pick.channel_id + "/" + pick.timestamp + " was not offered in flow " + flow_id);
    }
  }
  std::vector<SourceMessage> chosen;
  for (const auto& offered : flow.offered_messages) {
    if (std::any_of(selected.begin(), selected.end(), [&](const SourceMessage& m) { return same_message(m, offered); })) {
      chosen.push_back(offered);
    }
  }

  std::string query;
  for (const auto& m : chosen) query += clean_message_text(m.text) + "\n";
  const auto snapshot = index_.current();
  std::vector<std::string> ranked;
  for (const auto& doc : rank_documents(*snapshot, index_.embedder(), query, config_.relevance_threshold)) {
    ranked.push_back(doc.doc_path);
  }

  FlowInstance staged = flow;
  staged.selected_messages = chosen;
  staged.ranked_documents = ranked;
  staged.candidate_cursor = 0;
  staged.creation_offered = false;
  auto proposal = ranked.empty() ? build_creation_proposal(ctx, staged) : build_proposal(ctx, ranked[0], 0, chosen);

  Outcome out;
  flow = std::move(staged);
  const auto& installed = install_proposal(flow, std::move(proposal), out);
  transition(flow, FlowEvent::kSelectMessages, FlowState::kProposalShown, out, ctx.now);
  out.actions.push_back(proposal_card(ctx, flow, installed));
  return out;
}

Outcome WorkflowEngine::next_suggestion(EventContext& ctx, const std::string& flow_id, const std::string& user_id) {
  (void)user_id;
  auto& flow = mutable_flow(flow_id);
  require(flow, FlowEvent::kNextSuggestion);
  Outcome out;
  const auto next = flow.candidate_cursor + 1;
  if (next < flow.ranked_documents.size()) {
    auto proposal = build_proposal(ctx, flow.ranked_documents[next], next, flow.selected_messages);
    flow.candidate_cursor = next;
    flow.creation_offered = false;
    const auto& installed = install_proposal(flow, std::move(proposal), out);
    transition(flow, FlowEvent::kNextSuggestion, FlowState::kProposalShown, out, ctx.now);
    out.actions.push_back(proposal_card(ctx, flow, installed));
    return out;
  }
  retire_current_proposal(flow, ProposalState::kSuperseded, out);
  flow.candidate_cursor = flow.ranked_documents.size();
  flow.creation_offered = true;
  transition(flow, FlowEvent::kNextSuggestion, FlowState::kProposalShown, out, ctx.now);
  out.actions.push_back(ephemeral(
      ctx, flow.channel_id, flow.initiator_id,
      {TextBlock{"No other document matches these messages. You can create a new document altogether."},
       ButtonRowBlock{{Button{std::string(button::kCreateNewDocument), "Create a new document", flow.flow_id}}}}));
  return out;
}

Outcome WorkflowEngine::create_new_document(EventContext& ctx, const std::string& flow_id,
                                            const std::string& user_id) {
  (void)user_id;
  auto& flow = mutable_flow(flow_id);
  require(flow, FlowEvent::kCreateNewDocument);
  auto proposal = build_creation_proposal(ctx, flow);
  Outcome out;
  flow.candidate_cursor = flow.ranked_documents.size();
  flow.creation_offered = false;
  const auto& installed = install_proposal(flow, std::move(proposal), out);
  transition(flow, FlowEvent::kCreateNewDocument, FlowState::kProposalShown, out, ctx.now);
  out.actions.push_back(proposal_card(ctx, flow, installed));
  return out;
}

Outcome WorkflowEngine::start_discussion(EventContext& ctx, const std::string& flow_id, const std::string& user_id) {
  (void)user_id;
  auto& flow = mutable_flow(flow_id);
  require(flow, FlowEvent::kStartDiscussion);
  if (!flow.proposal_id) {
    throw Error(ErrorCode::kIllegalTransition, "flow " + flow_id + " has no proposal to discuss; create a new document first");
  }
  if (config_.managers.empty()) throw Error(ErrorCode::kNoManagersConfigured, "no managers are configured");

  auto& proposal = proposals_.at(*flow.proposal_id);
  std::vector<RevisionRecord> records;
  if (!proposal.is_creation() && repo_.exists(proposal.doc_path)) records = repo_.history(proposal.doc_path);
  const auto context_summary = assistant_.summarize_context(records);
  const auto change_summary = assistant_.summarize_change(proposal.base_content, proposal.proposed_content);

  Outcome out;
  const auto conversation = "conv-" + ctx.ids.next();
  flow.discussion_id = conversation;
  flow.members = conversation_members(flow.initiator_id);
  flow.change_summary = change_summary;
  conversations_[conversation] = flow.flow_id;
  proposal.state = ProposalState::kInDiscussion;
  touch(proposal, out);
  transition(flow, FlowEvent::kStartDiscussion, FlowState::kDiscussionOpen, out, ctx.now);

  ChatAction open;
  open.action_id = ctx.ids.next();
  open.kind = ActionKind::kOpenConversation;
  open.target = conversation;
  open.members = flow.members;
  open.blocks.push_back(TextBlock{"<@" + flow.initiator_id + "> proposed an update to " + proposal.target_path() +
                                  " and would like a manager's decision."});
  out.actions.push_back(std::move(open));
  out.actions.push_back(post(ctx, conversation, {TextBlock{context_summary}}));
  out.actions.push_back(decision_card(ctx, flow, proposal, "Proposed change: " + change_summary));
  transition(flow, FlowEvent::kContextPosted, FlowState::kAwaitingDecision, out, ctx.now);
  return out;
}

Outcome WorkflowEngine::invite_participant(EventContext& ctx, const std::string& flow_id,
                                           const std::string& inviter_id, const std::string& invitee_id) {
  auto& flow = mutable_flow(flow_id);
  require(flow, FlowEvent::kInviteParticipant);
  if (std::find(flow.members.begin(), flow.members.end(), inviter_id) == flow.members.end()) {
    throw Error(ErrorCode::kNotAMember, inviter_id + " is not a member of " + flow.discussion_id.value_or("?"));
  }
  Outcome out;
  if (std::find(flow.members.begin(), flow.members.end(), invitee_id) != flow.members.end()) return out;
  flow.members.push_back(invitee_id);
  transition(flow, FlowEvent::kInviteParticipant, flow.state, out, ctx.now);
  ChatAction invite;
  invite.action_id = ctx.ids.next();
  invite.kind = ActionKind::kInviteUser;
  invite.target = *flow.discussion_id;
  invite.user_id = invitee_id;
  invite.blocks.push_back(TextBlock{"<@" + inviter_id + "> invited <@" + invitee_id + "> to the discussion."});
  out.actions.push_back(std::move(invite));
  return out;
}

Outcome WorkflowEngine::manager_decide(EventContext& ctx, const std::string& flow_id, const std::string& user_id,
                                       Decision decision) {
  auto& flow = mutable_flow(flow_id);
  const auto event = decision == Decision::kApprove ? FlowEvent::kApprove : FlowEvent::kReject;
  require(flow, event);
  if (!is_manager(user_id)) throw Error(ErrorCode::kNotAManager, user_id + " is not a manager");
  if (!flow.proposal_id) throw Error(ErrorCode::kIllegalTransition, "flow " + flow_id + " has no proposal");
  auto& proposal = proposals_.at(*flow.proposal_id);
  const auto conversation = *flow.discussion_id;
  Outcome out;

  if (decision == Decision::kReject) {
    proposal.state = ProposalState::kRejected;
    touch(proposal, out);
    transition(flow, FlowEvent::kReject, FlowState::kRejected, out, ctx.now);
    out.actions.push_back(
        post(ctx, conversation, {TextBlock{"Rejected by <@" + user_id + ">. Nothing was committed."}}));
    return out;
  }

  const auto path = proposal.target_path();
  std::optional<RevisionId> applied;
  // A commit for this proposal may already exist if the process stopped
  // before the Applied state was persisted.
  if (repo_.exists(path)) {
    const auto records = repo_.history(path);
    if (records.front().context && records.front().context->proposal_id == proposal.proposal_id) {
      applied = records.front().revision;
    }
  }

  if (!applied) {
    CommitRequest request;
    request.path = path;
    request.new_content = proposal.proposed_content;
    request.context = ConversationContext{proposal.proposal_id, flow.initiator_id, user_id, proposal.source_messages,
                                          flow.change_summary};
    request.change_title = proposal.change_title;
    request.expected_base = proposal.base_revision;
    request.commit_time = ctx.now;
    try {
      applied = repo_.commit_update(request);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kStaleBase) throw;
      const auto doc_path = repo_.exists(path) ? path : std::string(kNewDocumentPrefix) + path;
      EditProposal fresh;
      try {
        fresh = build_proposal(ctx, doc_path, proposal.candidate_rank, proposal.source_messages);
      } catch (const Error& regen) {
        if (regen.code() != ErrorCode::kDegenerateOutput) throw;
        transition(flow, FlowEvent::kApprove, FlowState::kAwaitingDecision, out, ctx.now);
        out.actions.push_back(post(ctx, conversation,
                                   {TextBlock{"The document changed meanwhile and already reflects this proposal; "
                                              "nothing new to apply."}}));
        return out;
      }
      const auto summary = assistant_.summarize_change(fresh.base_content, fresh.proposed_content);
      proposal.state = ProposalState::kStale;
      touch(proposal, out);
      flow.proposal_id.reset();
      auto& installed = install_proposal(flow, std::move(fresh), out);
      installed.state = ProposalState::kInDiscussion;
      flow.change_summary = summary;
      transition(flow, FlowEvent::kApprove, FlowState::kAwaitingDecision, out, ctx.now);
      out.actions.push_back(post(
          ctx, conversation,
          {TextBlock{"The document changed meanwhile. The proposal was regenerated against the latest version; "
                     "please review it again."}}));
      out.actions.push_back(decision_card(ctx, flow, installed, "Proposed change: " + summary));
      return out;
    }
  }

  proposal.state = ProposalState::kApplied;
  touch(proposal, out);
  flow.applied_revision = applied;
  transition(flow, FlowEvent::kApprove, FlowState::kApplied, out, ctx.now);
  out.actions.push_back(post(ctx, conversation,
                             {TextBlock{"Approved by <@" + user_id + ">. Applied to " + path + " at " +
                                        short_revision(*applied) + "."}}));
  if (on_repository_changed_) on_repository_changed_();
  return out;
}

Outcome WorkflowEngine::regenerate(EventContext& ctx, const std::string& flow_id, const std::string& user_id,
                                   const std::vector<SourceMessage>& discussion_messages) {
  auto& flow = mutable_flow(flow_id);
  require(flow, FlowEvent::kRegenerate);
  if (std::find(flow.members.begin(), flow.members.end(), user_id) == flow.members.end()) {
    throw Error(ErrorCode::kNotAMember, user_id + " is not a member of " + flow.discussion_id.value_or("?"));
  }
  const auto& current = proposals_.at(*flow.proposal_id);
  auto messages = current.source_messages;
  for (const auto& m : discussion_messages) {
    if (std::none_of(messages.begin(), messages.end(), [&](const SourceMessage& s) { return same_message(s, m); })) {
      messages.push_back(m);
    }
  }
  const auto path = current.target_path();
  const auto doc_path = repo_.exists(path) ? path : std::string(kNewDocumentPrefix) + path;
  auto fresh = build_proposal(ctx, doc_path, current.candidate_rank, messages);
  const auto summary = assistant_.summarize_change(fresh.base_content, fresh.proposed_content);

  Outcome out;
  auto& installed = install_proposal(flow, std::move(fresh), out);
  installed.state = ProposalState::kInDiscussion;
  flow.change_summary = summary;
  transition(flow, FlowEvent::kRegenerate, FlowState::kAwaitingDecision, out, ctx.now);
  out.actions.push_back(decision_card(ctx, flow, installed, "Regenerated from the discussion: " + summary));
  return out;
}

Outcome WorkflowEngine::handle_direct_question(EventContext& ctx, const std::string& channel_id,
                                               const std::string& user_id, const std::string& question) {
  const auto snapshot = index_.current();
  const auto grounding = query_chunks(*snapshot, index_.embedder(), question, std::max<std::size_t>(1, config_.answer_top_k));
  const auto answer = assistant_.answer_question(question, grounding);

  FlowInstance flow;
  flow.flow_id = ctx.ids.next();
  flow.kind = FlowKind::kQuestion;
  flow.state = FlowState::kAsked;
  flow.channel_id = channel_id;
  flow.initiator_id = user_id;
  flow.question = question;
  flow.answer_text = answer.text;
  flow.cited_chunks = answer.cited_chunks;
  flow.created_at = ctx.now;
  flow.updated_at = ctx.now;
  const auto id = flow.flow_id;
  auto& stored = flows_[id] = std::move(flow);

  Outcome out;
  transition(stored, FlowEvent::kAnswerPosted, FlowState::kAnswered, out, ctx.now);
  std::vector<Block> blocks;
  blocks.push_back(TextBlock{answer.text});
  blocks.push_back(TextBlock{answer.cited_chunks.empty() ? std::string("No matching documents were found.")
                                                         : "Sources: " + join(answer.cited_chunks, ", ")});
  blocks.push_back(ButtonRowBlock{{
      Button{std::string(button::kHelpful), "Helpful", id},
      Button{std::string(button::kNotHelpful), "Not helpful, discuss", id},
  }});
  out.actions.push_back(post(ctx, channel_id, std::move(blocks)));
  return out;
}

Outcome WorkflowEngine::mark_helpful(EventContext& ctx, const std::string& flow_id, const std::string& user_id) {
  (void)user_id;
  auto& flow = mutable_flow(flow_id);
  require(flow, FlowEvent::kHelpful);
  Outcome out;
  transition(flow, FlowEvent::kHelpful, FlowState::kResolved, out, ctx.now);
  out.actions.push_back(post(ctx, flow.channel_id, {TextBlock{"Glad it helped."}}));
  return out;
}

Outcome WorkflowEngine::escalate_question(EventContext& ctx, const std::string& flow_id, const std::string& user_id) {
  (void)user_id;
  auto& flow = mutable_flow(flow_id);
  require(flow, FlowEvent::kNotHelpful);
  if (config_.managers.empty()) throw Error(ErrorCode::kNoManagersConfigured, "no managers are configured");

  Outcome out;
  const auto conversation = "conv-" + ctx.ids.next();
  flow.discussion_id = conversation;
  flow.members = conversation_members(flow.initiator_id);
  conversations_[conversation] = flow.flow_id;
  transition(flow, FlowEvent::kNotHelpful, FlowState::kDiscussionOpen, out, ctx.now);

  ChatAction open;
  open.action_id = ctx.ids.next();
  open.kind = ActionKind::kOpenConversation;
  open.target = conversation;
  open.members = flow.members;
  open.blocks.push_back(TextBlock{"<@" + flow.initiator_id + "> found an answer insufficient and would like to "
                                  "discuss it with a manager."});
  out.actions.push_back(std::move(open));

  std::vector<Block> blocks;
  blocks.push_back(TextBlock{"Question: " + flow.question});
  blocks.push_back(TextBlock{"Answer given: " + flow.answer_text});
  const auto snapshot = index_.current();
  for (const auto& id : flow.cited_chunks) {
    const auto it = std::find_if(snapshot->entries.begin(), snapshot->entries.end(),
                                 [&](const IndexEntry& e) { return e.chunk.chunk_id == id; });
    blocks.push_back(TextBlock{"Cited " + id + (it == snapshot->entries.end() ? std::string() : ":\n" + it->chunk.text)});
  }
  if (flow.cited_chunks.empty()) blocks.push_back(TextBlock{"No documents were cited."});
  blocks.push_back(
      ButtonRowBlock{{Button{std::string(button::kUpdateFromDiscussion), "Update the document", flow.flow_id}}});
  out.actions.push_back(post(ctx, conversation, std::move(blocks)));
  return out;
}

Outcome WorkflowEngine::spawn_update_from_discussion(EventContext& ctx, const std::string& question_flow_id,
                                                     const std::string& user_id,
                                                     const std::vector<SourceMessage>& messages) {
  auto& question = mutable_flow(question_flow_id);
  require(question, FlowEvent::kSpawnUpdate);
  if (std::find(question.members.begin(), question.members.end(), user_id) == question.members.end()) {
    throw Error(ErrorCode::kNotAMember, user_id + " is not a member of " + question.discussion_id.value_or("?"));
  }
  if (messages.empty()) throw Error(ErrorCode::kInvalidArgument, "the discussion has no messages to select from");

  Outcome out;
  auto& spawned = create_update_flow(ctx, *question.discussion_id, user_id, tail(messages, config_.selection_window), out);
  spawned.parent_flow_id = question.flow_id;
  question.spawned_flow_id = spawned.flow_id;
  transition(question, FlowEvent::kSpawnUpdate, FlowState::kEscalatedToUpdate, out, ctx.now);
  return out;
}

Outcome WorkflowEngine::sweep_idle(EventContext& ctx) {
  Outcome out;
  const std::int64_t ttl = config_.flow_ttl_hours * 3600;
  for (auto& [id, flow] : flows_) {
    if (flow.kind != FlowKind::kUpdate || is_terminal(flow.state)) continue;
    if (ctx.now - flow.updated_at <= ttl) continue;
    transition(flow, FlowEvent::kExpire, FlowState::kAbandoned, out, ctx.now);
    out.actions.push_back(ephemeral(ctx, flow.channel_id, flow.initiator_id,
                                    {TextBlock{"This update request expired after " +
                                               std::to_string(config_.flow_ttl_hours) + " hours without activity."}}));
  }
  return out;
}

}  // namespace choir
