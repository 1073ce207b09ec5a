#pragma once

#include "choir/context_codec.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace choir {

// 40-hex commit id. Empty string stands for "no commit yet" (unborn HEAD).
using RevisionId = std::string;

struct DocumentFile {
  std::string path;
  std::string content;
  RevisionId revision;
};

struct RevisionRecord {
  RevisionId revision;
  std::optional<RevisionId> parent;
  std::int64_t author_time = 0;
  std::vector<std::string> paths_changed;
  std::optional<ConversationContext> context;
  // Set when Choir trailers were present but undecodable.
  std::optional<std::string> context_error;
  // Raw commit message, kept for display.
  std::string message;
};

struct CommitRequest {
  std::string path;
  std::string new_content;
  ConversationContext context;
  std::string change_title;
  // Revision the edit was computed against; nullopt skips the stale check.
  std::optional<RevisionId> expected_base;
  // Author/committer time (UTC seconds); nullopt uses the wall clock.
  std::optional<std::int64_t> commit_time;
};

// `\r\n` and `\r` become `\n`; trailing newlines collapse to exactly one.
// Empty or newline-only content stays empty.
std::string normalize_content(std::string_view content);

// Rejects absolute paths, `..`/`.` segments, empty segments and non-.md names.
// Returns the normalized form (backslashes are not separators).
std::string normalize_document_path(std::string_view path);

// Versioned markdown store over a local git repository. Shareable across
// threads: reads run concurrently, writes are serialized per repository root
// and additionally guarded by a compare-and-swap on the branch ref.
class RepositoryHandle {
 public:
  static RepositoryHandle open(const std::filesystem::path& root, bool init = false);

  const std::filesystem::path& root() const { return root_; }

  // Current HEAD commit, or empty for a repository with no commits.
  RevisionId head() const;

  // Tracked `*.md` paths at `revision` (default HEAD), sorted.
  std::vector<std::string> list_documents(const std::optional<RevisionId>& revision = std::nullopt) const;

  DocumentFile read_document(std::string_view path, const std::optional<RevisionId>& revision = std::nullopt) const;

  bool exists(std::string_view path, const std::optional<RevisionId>& revision = std::nullopt) const;

  RevisionId commit_update(const CommitRequest& request);

  // Newest-first along first-parent history.
  std::vector<RevisionRecord> history(std::string_view path) const;

 private:
  RepositoryHandle(std::filesystem::path root, std::shared_ptr<std::mutex> write_mutex)
      : root_(std::move(root)), write_mutex_(std::move(write_mutex)) {}

  std::optional<std::string> blob_id(const RevisionId& revision, const std::string& path) const;

  std::filesystem::path root_;
  std::shared_ptr<std::mutex> write_mutex_;
};

}  // namespace choir
