#include "choir/gateway.hpp"

#include "choir/diff.hpp"
#include "choir/error.hpp"
#include "choir/ids.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <regex>

namespace choir {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::kMention: return "mention";
    case EventKind::kDirectMessage: return "dm";
    case EventKind::kButtonPress: return "button";
    case EventKind::kMessageSelection: return "selection";
  }
  return "?";
}

namespace {

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::kMalformedEvent, what); }

const json& field(const json& obj, const char* name, const char* where) {
  const auto it = obj.find(name);
  if (it == obj.end()) malformed(std::string(where) + "." + name + " is required");
  return *it;
}

std::string required_string(const json& obj, const char* name, const char* where) {
  const auto& v = field(obj, name, where);
  if (!v.is_string() || v.get_ref<const std::string&>().empty()) {
    malformed(std::string(where) + "." + name + " must be a non-empty string");
  }
  return v.get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* name, const char* where) {
  const auto it = obj.find(name);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) malformed(std::string(where) + "." + name + " must be a string");
  return it->get<std::string>();
}

std::vector<SourceMessage> message_list(const json& payload, const char* name) {
  std::vector<SourceMessage> out;
  const auto it = payload.find(name);
  if (it == payload.end() || it->is_null()) return out;
  if (!it->is_array()) malformed(std::string("payload.") + name + " must be an array");
  for (const auto& m : *it) {
    if (!m.is_object()) malformed(std::string("payload.") + name + " entries must be objects");
    SourceMessage msg;
    msg.channel_id = required_string(m, "channel_id", name);
    msg.author_id = required_string(m, "author_id", name);
    msg.timestamp = required_string(m, "timestamp", name);
    const auto& text = field(m, "text", name);
    if (!text.is_string()) malformed(std::string(name) + ".text must be a string");
    msg.text = text.get<std::string>();
    out.push_back(std::move(msg));
  }
  return out;
}

std::vector<SourceMessage> selection_refs(const json& payload) {
  const auto& selected = field(payload, "selected", "payload");
  if (!selected.is_array()) malformed("payload.selected must be an array");
  std::vector<SourceMessage> out;
  for (const auto& s : selected) {
    if (!s.is_object()) malformed("payload.selected entries must be objects");
    SourceMessage ref;
    ref.channel_id = required_string(s, "channel_id", "selected");
    ref.timestamp = required_string(s, "timestamp", "selected");
    out.push_back(std::move(ref));
  }
  return out;
}

bool known_button(std::string_view id) {
  for (const auto b : {button::kStartDiscussion, button::kNextSuggestion, button::kCreateNewDocument, button::kApprove,
                       button::kReject, button::kRegenerate, button::kInvite, button::kHelpful, button::kNotHelpful,
                       button::kUpdateFromDiscussion}) {
    if (id == b) return true;
  }
  return false;
}

json error_json(const Error& e) {
  return {{"code", std::string(error_code_name(e.code()))}, {"message", e.detail()}};
}

json context_json(const ConversationContext& ctx) {
  json messages = json::array();
  for (const auto& m : ctx.messages) messages.push_back(to_json(m));
  return {{"proposal_id", ctx.proposal_id},
          {"requester_id", ctx.requester_id},
          {"approver_id", ctx.approver_id},
          {"messages", messages},
          {"summary", ctx.summary ? json(*ctx.summary) : json(nullptr)}};
}

std::string subject_of(const std::string& message) { return message.substr(0, message.find('\n')); }

std::int64_t wall_clock_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

RepositoryHandle open_configured_repo(const ServiceConfig& config) {
  validate_config(config);
  try {
    return RepositoryHandle::open(config.repo_root, config.repo_init);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNotARepository && e.code() != ErrorCode::kPermissionDenied) throw;
    throw Error(ErrorCode::kConfigError, "config key 'repo_root': " + e.detail());
  }
}

}  // namespace

std::int64_t parse_rfc3339(std::string_view text) {
  static const std::regex re(R"(^(\d{4})-(\d{2})-(\d{2})[Tt ](\d{2}):(\d{2}):(\d{2})(\.\d+)?([Zz]|([+-])(\d{2}):(\d{2}))$)");
  std::cmatch m;
  if (!std::regex_match(text.begin(), text.end(), m, re)) malformed("timestamp '" + std::string(text) + "' is not RFC 3339");
  const auto num = [&](int i) { return std::stoi(m[i].str()); };
  using namespace std::chrono;
  const year_month_day date{year{num(1)}, month{static_cast<unsigned>(num(2))}, day{static_cast<unsigned>(num(3))}};
  if (!date.ok() || num(4) > 23 || num(5) > 59 || num(6) > 60) malformed("timestamp '" + std::string(text) + "' is out of range");
  std::int64_t secs = sys_days{date}.time_since_epoch().count() * 86400LL + num(4) * 3600LL + num(5) * 60LL + num(6);
  if (m[9].matched) {
    const std::int64_t offset = num(10) * 3600LL + num(11) * 60LL;
    secs += m[9].str() == "+" ? -offset : offset;
  }
  return secs;
}

std::string format_rfc3339(std::int64_t seconds) {
  const std::time_t t = static_cast<std::time_t>(seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ChatEvent parse_event(const json& j) {
  if (!j.is_object()) malformed("event must be a JSON object");
  ChatEvent ev;
  ev.event_id = required_string(j, "event_id", "event");
  ev.workspace_id = required_string(j, "workspace_id", "event");
  const auto kind = required_string(j, "kind", "event");
  if (kind == "mention") ev.kind = EventKind::kMention;
  else if (kind == "dm") ev.kind = EventKind::kDirectMessage;
  else if (kind == "button") ev.kind = EventKind::kButtonPress;
  else if (kind == "selection") ev.kind = EventKind::kMessageSelection;
  else malformed("event.kind '" + kind + "' is not one of mention, dm, button, selection");
  ev.channel_id = required_string(j, "channel_id", "event");
  ev.user_id = required_string(j, "user_id", "event");
  ev.ts = required_string(j, "ts", "event");
  parse_rfc3339(ev.ts);
  ev.payload = field(j, "payload", "event");
  if (!ev.payload.is_object()) malformed("event.payload must be an object");

  const auto& p = ev.payload;
  switch (ev.kind) {
    case EventKind::kMention:
      if (!field(p, "text", "payload").is_string()) malformed("payload.text must be a string");
      optional_string(p, "ts", "payload");
      message_list(p, "recent_messages");
      break;
    case EventKind::kDirectMessage:
      required_string(p, "text", "payload");
      break;
    case EventKind::kButtonPress: {
      const auto action = required_string(p, "action_id", "payload");
      if (!known_button(action)) malformed("payload.action_id '" + action + "' is not a known button");
      required_string(p, "flow_id", "payload");
      if (action == button::kInvite) required_string(p, "invitee_id", "payload");
      message_list(p, "recent_messages");
      break;
    }
    case EventKind::kMessageSelection:
      required_string(p, "flow_id", "payload");
      selection_refs(p);
      break;
  }
  return ev;
}

json to_json(const ChatEvent& event) {
  return {{"event_id", event.event_id},     {"workspace_id", event.workspace_id},
          {"kind", std::string(event_kind_name(event.kind))},
          {"channel_id", event.channel_id}, {"user_id", event.user_id},
          {"payload", event.payload},       {"ts", event.ts}};
}

Journal::Journal(fs::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw Error(ErrorCode::kInvalidArgument, "cannot open journal " + path_.string());
}

void Journal::append(const json& record) {
  out_ << record.dump() << '\n';
  out_.flush();
  if (!out_) throw Error(ErrorCode::kInvalidArgument, "write to journal " + path_.string() + " failed");
}

std::vector<json> Journal::read(const fs::path& path) {
  std::vector<json> records;
  std::ifstream in(path, std::ios::binary);
  if (!in) return records;
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (in.eof()) {
      // A final line without '\n' is a torn write.
      throw Error(ErrorCode::kCorruptJournal, "record " + std::to_string(index) + " is truncated");
    }
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kCorruptJournal, "record " + std::to_string(index) + " is not JSON: " + e.what());
    }
    const auto bad = [&](const std::string& what) {
      throw Error(ErrorCode::kCorruptJournal, "record " + std::to_string(index) + ": " + what);
    };
    if (!record.is_object()) bad("not an object");
    const bool has_event = record.contains("event") && record["event"].is_object();
    const bool has_sweep = record.contains("sweep") && record["sweep"].is_number_integer();
    if (has_event == has_sweep) bad("expected exactly one of event or sweep");
    if (record.contains("transitions") && !record["transitions"].is_array()) bad("transitions must be an array");
    for (const char* key : {"flows", "proposals", "actions"}) {
      if (!record.contains(key) || !record[key].is_array()) bad(std::string(key) + " must be an array");
    }
    try {
      if (has_event) parse_event(record["event"]);
      for (const auto& f : record["flows"]) flow_instance_from_json(f);
      for (const auto& p : record["proposals"]) edit_proposal_from_json(p);
      for (const auto& a : record["actions"]) {
        if (chat_action_from_json(a).seq == 0) bad("action without seq");
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kCorruptJournal) throw;
      bad(e.what());
    } catch (const json::exception& e) {
      bad(e.what());
    }
    records.push_back(std::move(record));
    ++index;
  }
  return records;
}

ReplaySummary summarize_journal(const std::vector<json>& records) {
  ReplaySummary s;
  std::map<std::string, std::string> flow_state;
  for (const auto& r : records) {
    ++s.records;
    if (r.contains("event")) ++s.events;
    else ++s.sweeps;
    if (r.contains("error") && !r["error"].is_null()) ++s.errors;
    for (const auto& f : r["flows"]) flow_state[f.at("flow_id").get<std::string>()] = f.at("state").get<std::string>();
    for (const auto& a : r["actions"]) s.last_seq = std::max(s.last_seq, a.at("seq").get<std::uint64_t>());
  }
  for (const auto& [id, state] : flow_state) ++s.flows_by_state[state];
  return s;
}

std::shared_ptr<const Provider> make_provider(const ServiceConfig& config) {
  if (config.assistant == "remote") {
    return std::make_shared<RemoteProvider>(
        RemoteProviderConfig{config.assistant_endpoint, config.assistant_model, config.assistant_api_key,
                             config.assistant_timeout_secs},
        PromptTemplates::load(config.assistant_prompts_dir));
  }
  return std::make_shared<ScriptedProvider>();
}

std::shared_ptr<const Embedder> make_embedder(const ServiceConfig& config) {
  if (config.embedder == "remote") {
    return std::make_shared<RemoteEmbedder>(config.embedder_endpoint, config.embedder_dimension,
                                            config.assistant_timeout_secs);
  }
  return std::make_shared<HashedEmbedder>(config.embedder_dimension);
}

Service::Service(ServiceConfig config, std::shared_ptr<const Provider> provider,
                 std::shared_ptr<const Embedder> embedder)
    : config_(std::move(config)), repo_(open_configured_repo(config_)) {
  if (!embedder) embedder = make_embedder(config_);
  if (!provider) provider = make_provider(config_);
  index_ = std::make_unique<KnowledgeIndex>(repo_, std::move(embedder), config_.max_chunk_chars);
  assistant_ = std::make_unique<Assistant>(std::move(provider));
  WorkflowConfig wf;
  wf.managers = config_.managers;
  wf.selection_window = config_.selection_window;
  wf.answer_top_k = config_.answer_top_k;
  wf.relevance_threshold = config_.relevance_threshold;
  wf.flow_ttl_hours = config_.flow_ttl_hours;
  engine_ = std::make_unique<WorkflowEngine>(repo_, *index_, *assistant_, wf, [this] { index_->request_rebuild(); });
  if (!config_.journal_path.empty()) {
    replay();
    journal_ = std::make_unique<Journal>(config_.journal_path);
  }
}

Service::~Service() { shutdown(); }

void Service::replay() {
  std::vector<ChatAction> restored;
  for (const auto& record : Journal::read(config_.journal_path)) {
    if (record.contains("event")) {
      seen_events_.insert(record["event"]["event_id"].get<std::string>());
      ++processed_;
    }
    for (const auto& f : record["flows"]) engine_->restore(flow_instance_from_json(f));
    for (const auto& p : record["proposals"]) engine_->restore(edit_proposal_from_json(p));
    for (const auto& a : record["actions"]) restored.push_back(chat_action_from_json(a));
  }
  std::lock_guard lock(actions_mutex_);
  for (auto& a : restored) {
    next_seq_ = std::max(next_seq_, a.seq + 1);
    actions_.push_back(std::move(a));
  }
}

IngestResult Service::ingest(const json& event_json) {
  ChatEvent event;
  try {
    event = parse_event(event_json);
  } catch (const Error& e) {
    return {400, {{"accepted", false}, {"error", error_json(e)}}};
  }
  return ingest(event);
}

IngestResult Service::ingest(const ChatEvent& event) {
  std::lock_guard lock(engine_mutex_);
  if (seen_events_.count(event.event_id) != 0) {
    return {200, {{"accepted", true}, {"duplicate", true}, {"event_id", event.event_id}}};
  }
  if (event.kind == EventKind::kButtonPress || event.kind == EventKind::kMessageSelection) {
    const auto flow_id = event.payload["flow_id"].get<std::string>();
    if (engine_->find_flow(flow_id) == nullptr) {
      return {400,
              {{"accepted", false},
               {"error", error_json(Error(ErrorCode::kMalformedEvent, "unknown flow " + flow_id))}}};
    }
  }

  // Bring the index up to date with commits made outside the service.
  index_->wait_idle();
  if (index_->current()->repo_revision != repo_.head()) index_->rebuild();

  IdSource ids(event.event_id);
  EventContext ctx{ids, parse_rfc3339(event.ts)};
  Outcome out;
  std::optional<Error> failure;
  try {
    dispatch(event, ctx, out);
  } catch (const Error& e) {
    failure = e;
    out = Outcome{};
    ChatAction notice;
    notice.action_id = ids.next();
    notice.kind = ActionKind::kEphemeralMessage;
    notice.target = event.channel_id;
    notice.user_id = event.user_id;
    notice.blocks.push_back(TextBlock{std::string(error_code_name(e.code())) + ": " + e.detail()});
    out.actions.push_back(std::move(notice));
  }
  record(to_json(event), failure, out);
  seen_events_.insert(event.event_id);
  ++processed_;

  json seqs = json::array();
  for (const auto& a : out.actions) seqs.push_back(a.seq);
  json body = {{"accepted", true},
               {"duplicate", false},
               {"event_id", event.event_id},
               {"flows", out.changed_flows},
               {"action_seqs", seqs}};
  if (failure) {
    body["error"] = error_json(*failure);
    return {409, body};
  }
  return {200, body};
}

void Service::dispatch(const ChatEvent& event, EventContext& ctx, Outcome& out) {
  const auto& p = event.payload;
  switch (event.kind) {
    case EventKind::kMention: {
      const auto message_ts = optional_string(p, "ts", "payload").value_or(event.ts);
      out = engine_->handle_mention(ctx, event.channel_id, event.user_id, p["text"].get<std::string>(), message_ts,
                                    message_list(p, "recent_messages"));
      return;
    }
    case EventKind::kDirectMessage:
      out = engine_->handle_direct_question(ctx, event.channel_id, event.user_id, p["text"].get<std::string>());
      return;
    case EventKind::kMessageSelection:
      out = engine_->select_messages(ctx, p["flow_id"].get<std::string>(), event.user_id, selection_refs(p));
      return;
    case EventKind::kButtonPress:
      break;
  }
  const auto action = p["action_id"].get<std::string>();
  const auto flow_id = p["flow_id"].get<std::string>();
  const auto& user = event.user_id;
  if (action == button::kStartDiscussion) out = engine_->start_discussion(ctx, flow_id, user);
  else if (action == button::kNextSuggestion) out = engine_->next_suggestion(ctx, flow_id, user);
  else if (action == button::kCreateNewDocument) out = engine_->create_new_document(ctx, flow_id, user);
  else if (action == button::kApprove) out = engine_->manager_decide(ctx, flow_id, user, Decision::kApprove);
  else if (action == button::kReject) out = engine_->manager_decide(ctx, flow_id, user, Decision::kReject);
  else if (action == button::kRegenerate) out = engine_->regenerate(ctx, flow_id, user, message_list(p, "recent_messages"));
  else if (action == button::kInvite) out = engine_->invite_participant(ctx, flow_id, user, p["invitee_id"].get<std::string>());
  else if (action == button::kHelpful) out = engine_->mark_helpful(ctx, flow_id, user);
  else if (action == button::kNotHelpful) out = engine_->escalate_question(ctx, flow_id, user);
  else if (action == button::kUpdateFromDiscussion) {
    out = engine_->spawn_update_from_discussion(ctx, flow_id, user, message_list(p, "recent_messages"));
  }
}

void Service::record(const json& event_json, const std::optional<Error>& error, Outcome& out) {
  {
    std::lock_guard lock(actions_mutex_);
    for (auto& a : out.actions) a.seq = next_seq_++;
  }
  json rec = json::object();
  if (event_json.is_number_integer()) rec["sweep"] = event_json;
  else rec["event"] = event_json;
  rec["error"] = error ? error_json(*error) : json(nullptr);
  rec["flows"] = json::array();
  for (const auto& id : out.changed_flows) rec["flows"].push_back(to_json(engine_->flow(id)));
  rec["proposals"] = json::array();
  for (const auto& id : out.changed_proposals) rec["proposals"].push_back(to_json(engine_->proposal(id)));
  rec["transitions"] = json::array();
  for (const auto& t : out.transitions) rec["transitions"].push_back(to_json(t));
  rec["actions"] = json::array();
  for (const auto& a : out.actions) rec["actions"].push_back(to_json(a));
  // Journal first so the stream never shows an action a restart would lose.
  if (journal_) journal_->append(rec);
  publish(out.actions);
}

void Service::publish(std::vector<ChatAction> actions) {
  if (actions.empty()) return;
  {
    std::lock_guard lock(actions_mutex_);
    for (auto& a : actions) actions_.push_back(std::move(a));
  }
  actions_cv_.notify_all();
}

std::vector<ChatAction> Service::sweep(std::int64_t now) {
  std::lock_guard lock(engine_mutex_);
  IdSource ids("sweep/" + std::to_string(now));
  EventContext ctx{ids, now};
  auto out = engine_->sweep_idle(ctx);
  if (out.changed_flows.empty() && out.actions.empty()) return {};
  record(json(now), std::nullopt, out);
  return out.actions;
}

std::vector<ChatAction> Service::actions_since(std::uint64_t since) const {
  std::lock_guard lock(actions_mutex_);
  const auto first = std::upper_bound(actions_.begin(), actions_.end(), since,
                                      [](std::uint64_t s, const ChatAction& a) { return s < a.seq; });
  return {first, actions_.end()};
}

bool Service::wait_for_actions(std::uint64_t since, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(actions_mutex_);
  actions_cv_.wait_for(lock, timeout, [&] { return shut_down_ || (!actions_.empty() && actions_.back().seq > since); });
  return !actions_.empty() && actions_.back().seq > since;
}

std::uint64_t Service::last_seq() const {
  std::lock_guard lock(actions_mutex_);
  return actions_.empty() ? 0 : actions_.back().seq;
}

void Service::shutdown() {
  {
    std::lock_guard lock(actions_mutex_);
    shut_down_ = true;
  }
  actions_cv_.notify_all();
}

bool Service::is_shut_down() const {
  std::lock_guard lock(actions_mutex_);
  return shut_down_;
}

json Service::documents_view() const {
  const auto head = repo_.head();
  return {{"revision", head.empty() ? json(nullptr) : json(head)}, {"documents", repo_.list_documents()}};
}

json Service::document_view(const std::string& path, const std::optional<std::string>& revision) const {
  const auto doc = repo_.read_document(path, revision);
  return {{"path", doc.path}, {"revision", doc.revision}, {"content", doc.content}};
}

json Service::history_view(const std::string& path) const {
  json entries = json::array();
  for (const auto& r : repo_.history(path)) {
    entries.push_back({{"revision", r.revision},
                       {"parent", r.parent ? json(*r.parent) : json(nullptr)},
                       {"author_time", r.author_time},
                       {"subject", subject_of(r.message)},
                       {"paths_changed", r.paths_changed},
                       {"context", r.context ? context_json(*r.context) : json(nullptr)},
                       {"context_error", r.context_error ? json(*r.context_error) : json(nullptr)}});
  }
  return {{"path", normalize_document_path(path)}, {"history", entries}};
}

std::optional<json> Service::flow_view(const std::string& flow_id) const {
  std::lock_guard lock(engine_mutex_);
  const auto* flow = engine_->find_flow(flow_id);
  if (flow == nullptr) return std::nullopt;
  json view = {{"flow", to_json(*flow)}, {"proposal", nullptr}};
  if (flow->proposal_id) {
    const auto& p = engine_->proposal(*flow->proposal_id);
    view["proposal"] = to_json(p);
    view["diff"] = to_json(diff_documents(p.base_content, p.proposed_content));
  }
  return view;
}

json Service::health_view() const {
  const auto head = repo_.head();
  const auto snapshot = index_->current();
  return {{"status", "ok"},
          {"head", head},
          {"index_revision", snapshot->repo_revision},
          {"index_chunks", snapshot->entries.size()},
          {"last_seq", last_seq()},
          {"processed_events", processed_events()},
          {"now", format_rfc3339(wall_clock_now())}};
}

std::vector<FlowInstance> Service::flows() const {
  std::lock_guard lock(engine_mutex_);
  std::vector<FlowInstance> out;
  for (const auto& [id, f] : engine_->flows()) out.push_back(f);
  return out;
}

std::vector<EditProposal> Service::proposals() const {
  std::lock_guard lock(engine_mutex_);
  std::vector<EditProposal> out;
  for (const auto& [id, p] : engine_->proposals()) out.push_back(p);
  return out;
}

std::size_t Service::processed_events() const {
  std::lock_guard lock(engine_mutex_);
  return processed_;
}

}  // namespace choir
