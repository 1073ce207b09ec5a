#pragma once

#include "choir/actions.hpp"
#include "choir/assistant.hpp"
#include "choir/config.hpp"
#include "choir/error.hpp"
#include "choir/knowledge_index.hpp"
#include "choir/repo_store.hpp"
#include "choir/workflow.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace choir {

enum class EventKind { kMention, kDirectMessage, kButtonPress, kMessageSelection };

std::string_view event_kind_name(EventKind kind);

// Normalized inbound chat-platform event.
struct ChatEvent {
  std::string event_id;
  std::string workspace_id;
  EventKind kind = EventKind::kMention;
  std::string channel_id;
  std::string user_id;
  nlohmann::json payload = nlohmann::json::object();
  std::string ts;
};

// Validates shape and field types; throws Error(kMalformedEvent).
ChatEvent parse_event(const nlohmann::json& j);
nlohmann::json to_json(const ChatEvent& event);

// "2026-03-04T10:15:00Z", optional fraction and numeric offset; UTC seconds.
std::int64_t parse_rfc3339(std::string_view text);
std::string format_rfc3339(std::int64_t seconds);

// Append-only NDJSON file: one record per processed event or sweep.
class Journal {
 public:
  explicit Journal(std::filesystem::path path);

  const std::filesystem::path& path() const { return path_; }
  void append(const nlohmann::json& record);

  // Throws Error(kCorruptJournal) naming the zero-based index of the bad line.
  // A missing file reads as empty.
  static std::vector<nlohmann::json> read(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

struct IngestResult {
  int status = 200;
  nlohmann::json body;
};

// Totals reported by `choir replay`.
struct ReplaySummary {
  std::size_t records = 0;
  std::size_t events = 0;
  std::size_t sweeps = 0;
  std::size_t errors = 0;
  std::uint64_t last_seq = 0;
  std::map<std::string, std::size_t> flows_by_state;
};

// Validates journal records without touching a repository.
ReplaySummary summarize_journal(const std::vector<nlohmann::json>& records);

// Service core shared by the HTTP server, the CLI and the Python binding.
// Events are processed one at a time; reads of the action log and of the
// repository may run concurrently with processing.
class Service {
 public:
  // Opens the repository, builds the index and replays the journal.
  explicit Service(ServiceConfig config, std::shared_ptr<const Provider> provider = nullptr,
                   std::shared_ptr<const Embedder> embedder = nullptr);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  IngestResult ingest(const nlohmann::json& event_json);
  IngestResult ingest(const ChatEvent& event);

  // Abandons idle update flows as of `now` (UTC seconds).
  std::vector<ChatAction> sweep(std::int64_t now);

  std::vector<ChatAction> actions_since(std::uint64_t since) const;
  // Waits until an action with seq > since exists, the timeout passes or
  // shutdown() is called. Returns whether new actions are available.
  bool wait_for_actions(std::uint64_t since, std::chrono::milliseconds timeout) const;
  std::uint64_t last_seq() const;
  void shutdown();
  bool is_shut_down() const;

  nlohmann::json documents_view() const;
  nlohmann::json document_view(const std::string& path, const std::optional<std::string>& revision) const;
  nlohmann::json history_view(const std::string& path) const;
  // nullopt when the flow is unknown.
  std::optional<nlohmann::json> flow_view(const std::string& flow_id) const;
  nlohmann::json health_view() const;

  const ServiceConfig& config() const { return config_; }
  RepositoryHandle& repository() { return repo_; }
  KnowledgeIndex& index() { return *index_; }
  // Snapshot copies, taken under the processing lock.
  std::vector<FlowInstance> flows() const;
  std::vector<EditProposal> proposals() const;
  std::size_t processed_events() const;

 private:
  void replay();
  void dispatch(const ChatEvent& event, EventContext& ctx, Outcome& out);
  void record(const nlohmann::json& event_json, const std::optional<Error>& error, Outcome& out);
  void publish(std::vector<ChatAction> actions);

  ServiceConfig config_;
  RepositoryHandle repo_;
  std::unique_ptr<KnowledgeIndex> index_;
  std::unique_ptr<Assistant> assistant_;
  std::unique_ptr<WorkflowEngine> engine_;
  std::unique_ptr<Journal> journal_;

  mutable std::mutex engine_mutex_;
  std::set<std::string> seen_events_;
  std::size_t processed_ = 0;

  mutable std::mutex actions_mutex_;
  mutable std::condition_variable actions_cv_;
  std::vector<ChatAction> actions_;
  std::uint64_t next_seq_ = 1;
  bool shut_down_ = false;
};

// Builds the configured provider and embedder.
std::shared_ptr<const Provider> make_provider(const ServiceConfig& config);
std::shared_ptr<const Embedder> make_embedder(const ServiceConfig& config);

}  // namespace choir
