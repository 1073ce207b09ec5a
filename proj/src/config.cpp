#include "choir/config.hpp"

#include "choir/error.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace choir {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& key, const std::string& what) {
  throw Error(ErrorCode::kConfigError, "config key '" + key + "': " + what);
}

std::string as_string(const std::string& key, const json& v) {
  if (!v.is_string()) fail(key, "expected a string");
  return v.get<std::string>();
}

std::size_t as_count(const std::string& key, const json& v) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 1) fail(key, "expected a positive integer");
  return v.get<std::size_t>();
}

fs::path as_path(const std::string& key, const json& v, const fs::path& base) {
  fs::path p = as_string(key, v);
  if (p.empty()) fail(key, "expected a non-empty path");
  return p.is_relative() && !base.empty() ? base / p : p;
}

}  // namespace

ServiceConfig parse_config(std::string_view text, const fs::path& base_dir) {
  ServiceConfig config;
  using Setter = std::function<void(const std::string&, const json&)>;
  const std::map<std::string, Setter> setters = {
      {"repo_root", [&](auto& k, auto& v) { config.repo_root = as_path(k, v, base_dir); }},
      {"repo_init", [&](auto& k, auto& v) {
         if (!v.is_boolean()) fail(k, "expected true or false");
         config.repo_init = v.template get<bool>();
       }},
      {"managers", [&](auto& k, auto& v) {
         if (!v.is_array()) fail(k, "expected an array of user ids");
         config.managers.clear();
         for (const auto& m : v) {
           if (!m.is_string() || m.template get<std::string>().empty()) fail(k, "expected non-empty string user ids");
           config.managers.push_back(m.template get<std::string>());
         }
       }},
      {"selection_window", [&](auto& k, auto& v) { config.selection_window = as_count(k, v); }},
      {"answer_top_k", [&](auto& k, auto& v) { config.answer_top_k = as_count(k, v); }},
      {"relevance_threshold", [&](auto& k, auto& v) {
         if (!v.is_number() || v.template get<double>() < -1.0 || v.template get<double>() > 1.0) {
           fail(k, "expected a number in [-1, 1]");
         }
         config.relevance_threshold = v.template get<double>();
       }},
      {"max_chunk_chars", [&](auto& k, auto& v) { config.max_chunk_chars = as_count(k, v); }},
      {"embedder", [&](auto& k, auto& v) { config.embedder = as_string(k, v); }},
      {"embedder.endpoint", [&](auto& k, auto& v) { config.embedder_endpoint = as_string(k, v); }},
      {"embedder.dimension", [&](auto& k, auto& v) { config.embedder_dimension = as_count(k, v); }},
      {"assistant", [&](auto& k, auto& v) { config.assistant = as_string(k, v); }},
      {"assistant.endpoint", [&](auto& k, auto& v) { config.assistant_endpoint = as_string(k, v); }},
      {"assistant.model", [&](auto& k, auto& v) { config.assistant_model = as_string(k, v); }},
      {"assistant.api_key", [&](auto& k, auto& v) { config.assistant_api_key = as_string(k, v); }},
      {"assistant.timeout_secs", [&](auto& k, auto& v) {
         if (!v.is_number() || v.template get<double>() <= 0) fail(k, "expected a positive number");
         config.assistant_timeout_secs = v.template get<double>();
       }},
      {"assistant.prompts_dir", [&](auto& k, auto& v) { config.assistant_prompts_dir = as_path(k, v, base_dir); }},
      {"flow_ttl_hours", [&](auto& k, auto& v) { config.flow_ttl_hours = static_cast<std::int64_t>(as_count(k, v)); }},
      {"listen_addr", [&](auto& k, auto& v) { config.listen_addr = as_string(k, v); }},
      {"journal_path", [&](auto& k, auto& v) { config.journal_path = as_path(k, v, base_dir); }},
  };

  std::set<std::string> seen;
  std::istringstream lines{std::string(text)};
  int line_number = 0;
  for (std::string raw; std::getline(lines, raw);) {
    ++line_number;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kConfigError, "line " + std::to_string(line_number) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const auto setter = setters.find(key);
    if (setter == setters.end()) fail(key, "unknown key");
    if (!seen.insert(key).second) fail(key, "set more than once");
    json value;
    try {
      value = json::parse(trim(line.substr(eq + 1)));
    } catch (const json::exception&) {
      fail(key, "value is not a JSON literal (strings need double quotes)");
    }
    setter->second(key, value);
  }
  if (seen.count("repo_root") == 0) fail("repo_root", "required");
  if (config.assistant_prompts_dir.is_relative() && !base_dir.empty() && seen.count("assistant.prompts_dir") == 0) {
    config.assistant_prompts_dir = base_dir / config.assistant_prompts_dir;
  }
  validate_config(config);
  return config;
}

ServiceConfig load_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kConfigError, "cannot read config file " + file.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), fs::absolute(file).parent_path());
}

void validate_config(const ServiceConfig& config) {
  if (config.embedder != "hashed" && config.embedder != "remote") fail("embedder", "expected \"hashed\" or \"remote\"");
  if (config.embedder == "remote" && config.embedder_endpoint.empty()) {
    fail("embedder.endpoint", "required when embedder = \"remote\"");
  }
  if (config.assistant != "scripted" && config.assistant != "remote") {
    fail("assistant", "expected \"scripted\" or \"remote\"");
  }
  if (config.assistant == "remote" && config.assistant_endpoint.empty()) {
    fail("assistant.endpoint", "required when assistant = \"remote\"");
  }
  const auto colon = config.listen_addr.rfind(':');
  if (colon == std::string::npos || colon == 0) fail("listen_addr", "expected host:port");
  try {
    const auto port = std::stoi(config.listen_addr.substr(colon + 1));
    if (port < 0 || port > 65535) fail("listen_addr", "port out of range");
  } catch (const std::logic_error&) {
    fail("listen_addr", "port is not a number");
  }
}

}  // namespace choir
