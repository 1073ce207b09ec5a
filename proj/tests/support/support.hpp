#pragma once

#include "choir/actions.hpp"
#include "choir/config.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace choir::testing {

namespace fs = std::filesystem;
using nlohmann::json;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "choir");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

struct ShellResult {
  int status = 0;
  std::string out;
};

// Runs through /bin/sh, capturing stdout.
ShellResult shell(const std::string& command);
std::string quote(std::string_view arg);

// Runs git in `root` with a fixed test identity; throws on a non-zero exit.
std::string git(const fs::path& root, const std::string& args);

fs::path fixtures_dir();
std::string read_text(const fs::path& file);
void write_text(const fs::path& file, std::string_view text);

void init_repo(const fs::path& root);
// init_repo plus one commit holding every file in fixtures/repo.
void seed_fixture_repo(const fs::path& root);
// Commits `content` at `path` with plain git, outside CHOIR. Returns HEAD.
std::string manual_commit(const fs::path& root, const std::string& path, const std::string& content,
                          const std::string& message);
// Commit ids reachable from HEAD, newest first.
std::vector<std::string> commit_ids(const fs::path& root);

// "2026-03-04T10:00:00Z" plus `offset` seconds.
std::string event_ts(int offset);

ServiceConfig test_config(const fs::path& repo_root, const fs::path& journal = {});

// Builds gateway events with deterministic UUID event ids.
class EventFactory {
 public:
  explicit EventFactory(std::string seed = "events") : seed_(std::move(seed)) {}

  std::string next_id();
  json mention(const std::string& channel, const std::string& user, const std::string& text,
               const std::vector<SourceMessage>& recent, const std::string& message_ts = "");
  json dm(const std::string& channel, const std::string& user, const std::string& text);
  json button(const std::string& channel, const std::string& user, std::string_view action,
              const std::string& flow_id, const json& extra = json::object());
  json selection(const std::string& channel, const std::string& user, const std::string& flow_id,
                 const std::vector<SourceMessage>& picks);

 private:
  json envelope(const std::string& kind, const std::string& channel, const std::string& user, json payload);

  std::string seed_;
  int counter_ = 0;
};

// Flow id carried by the first MessageSelect block or button in `action`.
std::string flow_id_in(const ChatAction& action);
bool has_block(const ChatAction& action, std::string_view block_kind);
std::string text_of(const ChatAction& action);

// Chat transcript behind the Fig. 3 style update scenario; the last three
// messages are the ones the Requester saves.
std::vector<SourceMessage> deadline_transcript(const std::string& channel);
inline constexpr const char* kDeadlineQuery = "When do we decide whether to submit a paper before the deadline?";

}  // namespace choir::testing
