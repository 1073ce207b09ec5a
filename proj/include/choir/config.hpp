#pragma once

#include "choir/knowledge_index.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace choir {

struct ServiceConfig {
  std::filesystem::path repo_root;
  // Create the repository when `repo_root` is not one yet.
  bool repo_init = false;
  std::vector<std::string> managers;
  std::size_t selection_window = 10;
  std::size_t answer_top_k = 4;
  double relevance_threshold = kDefaultRelevanceThreshold;
  std::size_t max_chunk_chars = kDefaultMaxChunkChars;

  std::string embedder = "hashed";  // "hashed" | "remote"
  std::string embedder_endpoint;
  std::size_t embedder_dimension = kDefaultEmbeddingDimension;

  std::string assistant = "scripted";  // "scripted" | "remote"
  std::string assistant_endpoint;
  std::string assistant_model;
  std::string assistant_api_key;
  double assistant_timeout_secs = 30.0;
  std::filesystem::path assistant_prompts_dir = "prompts";

  std::int64_t flow_ttl_hours = 72;
  std::string listen_addr = "127.0.0.1:8080";
  std::filesystem::path journal_path;
};

// Parses `key = <JSON value>` lines; `#` starts a comment line. Relative paths
// resolve against `base_dir`. Throws Error(kConfigError) naming the key.
ServiceConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});

ServiceConfig load_config(const std::filesystem::path& file);

// Checks cross-field constraints; throws Error(kConfigError).
void validate_config(const ServiceConfig& config);

}  // namespace choir
