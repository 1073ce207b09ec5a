#include "support.hpp"

#include "choir/ids.hpp"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <sys/wait.h>

#ifndef CHOIR_FIXTURES_DIR
#error "CHOIR_FIXTURES_DIR must be defined"
#endif

namespace choir::testing {

TempDir::TempDir(const std::string& tag) {
  std::string pattern = (fs::temp_directory_path() / (tag + "-XXXXXX")).string();
  if (mkdtemp(pattern.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

ShellResult shell(const std::string& command) {
  ShellResult result;
  FILE* pipe = popen(command.c_str(), "r");
  if (pipe == nullptr) throw std::runtime_error("popen failed: " + command);
  std::array<char, 4096> buffer{};
  std::size_t n = 0;
  while ((n = fread(buffer.data(), 1, buffer.size(), pipe)) > 0) result.out.append(buffer.data(), n);
  const int status = pclose(pipe);
  result.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::string quote(std::string_view arg) {
  std::string out = "'";
  for (const char c : arg) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

std::string git(const fs::path& root, const std::string& args) {
  const auto result = shell("git -C " + quote(root.string()) +
                            " -c user.name=Tester -c user.email=tester@example.org -c commit.gpgsign=false " + args +
                            " 2>&1");
  if (result.status != 0) throw std::runtime_error("git " + args + " failed: " + result.out);
  return result.out;
}

fs::path fixtures_dir() { return CHOIR_FIXTURES_DIR; }

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const fs::path& file, std::string_view text) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  out << text;
}

void init_repo(const fs::path& root) {
  fs::create_directories(root);
  git(root, "init -q -b main");
}

void seed_fixture_repo(const fs::path& root) {
  init_repo(root);
  for (const auto& entry : fs::directory_iterator(fixtures_dir() / "repo")) {
    fs::copy_file(entry.path(), root / entry.path().filename());
  }
  git(root, "add -A");
  git(root, "commit -q -m 'Seed lab handbook'");
}

std::string manual_commit(const fs::path& root, const std::string& path, const std::string& content,
                          const std::string& message) {
  write_text(root / path, content);
  git(root, "add " + quote(path));
  git(root, "commit -q -m " + quote(message));
  auto head = git(root, "rev-parse HEAD");
  head.pop_back();
  return head;
}

std::vector<std::string> commit_ids(const fs::path& root) {
  std::vector<std::string> ids;
  const auto result = shell("git -C " + quote(root.string()) + " rev-list HEAD 2>/dev/null");
  if (result.status != 0) return ids;
  std::istringstream lines(result.out);
  for (std::string line; std::getline(lines, line);) ids.push_back(line);
  return ids;
}

std::string event_ts(int offset) {
  const int h = 10 + offset / 3600;
  const int m = (offset / 60) % 60;
  const int s = offset % 60;
  char buf[32];
  std::snprintf(buf, sizeof buf, "2026-03-04T%02d:%02d:%02dZ", h, m, s);
  return buf;
}

ServiceConfig test_config(const fs::path& repo_root, const fs::path& journal) {
  ServiceConfig config;
  config.repo_root = repo_root;
  config.managers = {"lee"};
  config.journal_path = journal;
  return config;
}

std::string EventFactory::next_id() {
  IdSource ids(seed_ + "/" + std::to_string(counter_++));
  return ids.next();
}

json EventFactory::envelope(const std::string& kind, const std::string& channel, const std::string& user,
                            json payload) {
  const int n = counter_;
  return {{"event_id", next_id()}, {"workspace_id", "w"}, {"kind", kind},      {"channel_id", channel},
          {"user_id", user},       {"payload", std::move(payload)},            {"ts", event_ts(n * 10)}};
}

json EventFactory::mention(const std::string& channel, const std::string& user, const std::string& text,
                           const std::vector<SourceMessage>& recent, const std::string& message_ts) {
  json messages = json::array();
  for (const auto& m : recent) messages.push_back(to_json(m));
  json payload = {{"text", text}, {"recent_messages", messages}};
  if (!message_ts.empty()) payload["ts"] = message_ts;
  return envelope("mention", channel, user, std::move(payload));
}

json EventFactory::dm(const std::string& channel, const std::string& user, const std::string& text) {
  return envelope("dm", channel, user, {{"text", text}});
}

json EventFactory::button(const std::string& channel, const std::string& user, std::string_view action,
                          const std::string& flow_id, const json& extra) {
  json payload = {{"action_id", std::string(action)}, {"flow_id", flow_id}};
  for (const auto& [k, v] : extra.items()) payload[k] = v;
  return envelope("button", channel, user, std::move(payload));
}

json EventFactory::selection(const std::string& channel, const std::string& user, const std::string& flow_id,
                             const std::vector<SourceMessage>& picks) {
  json selected = json::array();
  for (const auto& m : picks) selected.push_back({{"channel_id", m.channel_id}, {"timestamp", m.timestamp}});
  return envelope("selection", channel, user, {{"flow_id", flow_id}, {"selected", selected}});
}

std::string flow_id_in(const ChatAction& action) {
  for (const auto& block : action.blocks) {
    if (const auto* select = std::get_if<MessageSelectBlock>(&block)) return select->flow_id;
    if (const auto* row = std::get_if<ButtonRowBlock>(&block); row != nullptr && !row->buttons.empty()) {
      return row->buttons.front().flow_id;
    }
  }
  return {};
}

bool has_block(const ChatAction& action, std::string_view block_kind) {
  for (const auto& block : action.blocks) {
    if (to_json(block).value("kind", "") == block_kind) return true;
  }
  return false;
}

std::string text_of(const ChatAction& action) {
  std::string out;
  for (const auto& block : action.blocks) {
    if (const auto* text = std::get_if<TextBlock>(&block)) out += text->text + "\n";
  }
  return out;
}

std::vector<SourceMessage> deadline_transcript(const std::string& channel) {
  return {
      {channel, "andy", "1709546400.000100", "Did anyone book the eye tracker for Thursday?"},
      {channel, "lee", "1709546460.000200", "Three months before the deadline has been hard to hold lately."},
      {channel, "caleb", "1709546520.000300", "True. How about deciding whether to submit or not a month ahead?"},
      {channel, "adnan", "1709546580.000400", "Yeah, that sounds safer."},
      {channel, "adnan", "1709546640.000500",
       "@CHOIR We aim for a decision to submit a paper or not one month before the deadline."},
  };
}

}  // namespace choir::testing
