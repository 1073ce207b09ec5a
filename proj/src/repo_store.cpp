#include "choir/repo_store.hpp"

#include "choir/error.hpp"
#include "choir/ids.hpp"
#include "process.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <map>
#include <sstream>
#include <system_error>

namespace choir {
namespace {

namespace fs = std::filesystem;

constexpr std::string_view kZeroId = "0000000000000000000000000000000000000000";

struct Git {
  const fs::path& root;

  detail::ProcessResult run(std::vector<std::string> args, const std::string& input = {},
                            const std::map<std::string, std::string>& env = {}) const {
    std::vector<std::string> argv = {"git", "-C", root.string(), "-c", "commit.gpgsign=false",
                                     "-c", "core.quotepath=false"};
    argv.insert(argv.end(), std::make_move_iterator(args.begin()), std::make_move_iterator(args.end()));
    try {
      return detail::run_process(argv, input, env);
    } catch (const std::system_error& e) {
      throw Error(ErrorCode::kGitFailure, e.what());
    }
  }

  std::string checked(std::vector<std::string> args, const std::string& input = {},
                      const std::map<std::string, std::string>& env = {}) const {
    const std::string label = args.empty() ? std::string() : args.front();
    auto result = run(std::move(args), input, env);
    if (result.exit_code != 0) {
      throw Error(ErrorCode::kGitFailure, "git " + label + " failed: " + result.err);
    }
    return std::move(result.out);
  }
};

std::string trim_newline(std::string text) {
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return text;
}

std::vector<std::string> split_nul(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = text.find('\0', start);
    if (end == std::string::npos) {
      out.push_back(text.substr(start));
      break;
    }
    if (end > start) out.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

std::mutex& registry_mutex() {
  static std::mutex mutex;
  return mutex;
}

std::shared_ptr<std::mutex> writer_lock_for(const fs::path& root) {
  static std::map<std::string, std::weak_ptr<std::mutex>> registry;
  std::lock_guard lock(registry_mutex());
  auto& slot = registry[root.string()];
  auto existing = slot.lock();
  if (existing) return existing;
  auto created = std::make_shared<std::mutex>();
  slot = created;
  return created;
}

bool ends_with(std::string_view text, std::string_view suffix) {
  return text.size() >= suffix.size() && text.substr(text.size() - suffix.size()) == suffix;
}

std::string git_date(std::int64_t seconds) { return "@" + std::to_string(seconds) + " +0000"; }

}  // namespace

std::string normalize_content(std::string_view content) {
  std::string out;
  out.reserve(content.size() + 1);
  for (std::size_t i = 0; i < content.size(); ++i) {
    if (content[i] == '\r') {
      out.push_back('\n');
      if (i + 1 < content.size() && content[i + 1] == '\n') ++i;
    } else {
      out.push_back(content[i]);
    }
  }
  while (!out.empty() && out.back() == '\n') out.pop_back();
  if (!out.empty()) out.push_back('\n');
  return out;
}

std::string normalize_document_path(std::string_view path) {
  if (path.empty()) throw Error(ErrorCode::kInvalidArgument, "empty document path");
  if (path.front() == '/') throw Error(ErrorCode::kInvalidArgument, "document path must be relative: " + std::string(path));
  if (path.find_first_of(std::string_view("\0\n\r", 3)) != std::string_view::npos) {
    throw Error(ErrorCode::kInvalidArgument, "document path contains control characters");
  }
  while (path.substr(0, 2) == "./") path.remove_prefix(2);
  std::string_view rest = path;
  while (!rest.empty()) {
    const auto slash = rest.find('/');
    const auto segment = rest.substr(0, slash);
    if (segment.empty() || segment == "." || segment == "..") {
      throw Error(ErrorCode::kInvalidArgument, "invalid document path: " + std::string(path));
    }
    if (slash == std::string_view::npos) break;
    rest = rest.substr(slash + 1);
    if (rest.empty()) throw Error(ErrorCode::kInvalidArgument, "invalid document path: " + std::string(path));
  }
  if (!ends_with(path, ".md") || path.size() == 3 || ends_with(path, "/.md")) {
    throw Error(ErrorCode::kInvalidArgument, "document path must name a .md file: " + std::string(path));
  }
  return std::string(path);
}

RepositoryHandle RepositoryHandle::open(const fs::path& root, bool init) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    if (!init) throw Error(ErrorCode::kNotARepository, "no such directory: " + root.string());
    fs::create_directories(root, ec);
    if (ec) throw Error(ErrorCode::kPermissionDenied, "cannot create " + root.string() + ": " + ec.message());
  }
  if (::access(root.c_str(), R_OK | X_OK) != 0) {
    throw Error(ErrorCode::kPermissionDenied, "cannot read " + root.string());
  }
  const fs::path canonical = fs::canonical(root);
  const Git git{canonical};

  auto toplevel = git.run({"rev-parse", "--show-toplevel"});
  bool is_repo = toplevel.exit_code == 0 && fs::path(trim_newline(toplevel.out)) == canonical;
  if (!is_repo) {
    const auto bare = git.run({"rev-parse", "--is-bare-repository", "--absolute-git-dir"});
    if (bare.exit_code == 0) {
      std::istringstream lines(bare.out);
      std::string flag, dir;
      std::getline(lines, flag);
      std::getline(lines, dir);
      is_repo = flag == "true" && fs::path(dir) == canonical;
    }
  }
  if (!is_repo) {
    if (!init) throw Error(ErrorCode::kNotARepository, root.string() + " is not a git repository root");
    if (::access(canonical.c_str(), W_OK) != 0) {
      throw Error(ErrorCode::kPermissionDenied, "cannot write " + canonical.string());
    }
    git.checked({"init", "-q", "-b", "main"});
  }
  return RepositoryHandle(canonical, writer_lock_for(canonical));
}

RevisionId RepositoryHandle::head() const {
  const auto result = Git{root_}.run({"rev-parse", "--verify", "-q", "HEAD^{commit}"});
  if (result.exit_code != 0) return {};
  return trim_newline(result.out);
}

std::vector<std::string> RepositoryHandle::list_documents(const std::optional<RevisionId>& at) const {
  const auto revision = at ? *at : head();
  if (revision.empty()) return {};
  std::vector<std::string> documents;
  for (auto& path : split_nul(Git{root_}.checked({"ls-tree", "-r", "-z", "--name-only", revision}))) {
    if (ends_with(path, ".md")) documents.push_back(std::move(path));
  }
  std::sort(documents.begin(), documents.end());
  return documents;
}

std::optional<std::string> RepositoryHandle::blob_id(const RevisionId& revision, const std::string& path) const {
  if (revision.empty()) return std::nullopt;
  const auto out = Git{root_}.checked({"ls-tree", "-z", revision, "--", path});
  // "<mode> <type> <id>\t<path>\0"
  for (const auto& entry : split_nul(out)) {
    const auto tab = entry.find('\t');
    if (tab == std::string::npos || entry.substr(tab + 1) != path) continue;
    std::istringstream fields(entry.substr(0, tab));
    std::string mode, type, id;
    fields >> mode >> type >> id;
    if (type == "blob") return id;
  }
  return std::nullopt;
}

bool RepositoryHandle::exists(std::string_view path, const std::optional<RevisionId>& revision) const {
  return blob_id(revision ? *revision : head(), std::string(path)).has_value();
}

DocumentFile RepositoryHandle::read_document(std::string_view path, const std::optional<RevisionId>& revision) const {
  const Git git{root_};
  RevisionId resolved;
  if (revision) {
    const auto verify = git.run({"rev-parse", "--verify", "-q", *revision + "^{commit}"});
    if (verify.exit_code != 0 || revision->empty()) {
      throw Error(ErrorCode::kRevisionNotFound, "unknown revision " + *revision);
    }
    resolved = trim_newline(verify.out);
  } else {
    resolved = head();
  }
  const std::string wanted = normalize_document_path(path);
  const auto blob = blob_id(resolved, wanted);
  if (!blob) throw Error(ErrorCode::kDocumentNotFound, wanted + " not found at " + (resolved.empty() ? "HEAD" : resolved));
  return DocumentFile{wanted, normalize_content(git.checked({"cat-file", "blob", *blob})), resolved};
}

RevisionId RepositoryHandle::commit_update(const CommitRequest& request) {
  const std::string path = normalize_document_path(request.path);
  const std::string content = normalize_content(request.new_content);
  const Git git{root_};

  std::lock_guard lock(*write_mutex_);
  const RevisionId current_head = head();
  const auto current_blob = blob_id(current_head, path);

  if (request.expected_base) {
    std::optional<std::string> base_blob;
    if (!request.expected_base->empty()) {
      const auto verify = git.run({"rev-parse", "--verify", "-q", *request.expected_base + "^{commit}"});
      if (verify.exit_code != 0) throw Error(ErrorCode::kStaleBase, "base revision " + *request.expected_base + " is gone");
      base_blob = blob_id(trim_newline(verify.out), path);
    }
    if (base_blob != current_blob) {
      throw Error(ErrorCode::kStaleBase, path + " changed since " +
                                             (request.expected_base->empty() ? "<empty>" : *request.expected_base));
    }
  }

  if (content.empty()) throw Error(ErrorCode::kEmptyEdit, "refusing to commit empty content to " + path);
  if (current_blob && normalize_content(git.checked({"cat-file", "blob", *current_blob})) == content) {
    throw Error(ErrorCode::kEmptyEdit, path + " is unchanged");
  }

  const CommitKind kind = current_blob ? CommitKind::kUpdate : CommitKind::kCreate;
  const std::string title = request.change_title.empty()
                                ? std::string(kind == CommitKind::kCreate ? "Create " : "Update ") + path
                                : request.change_title;
  const std::string message = encode_commit_message(kind, path, title, request.context);

  const std::string blob = trim_newline(git.checked({"hash-object", "-w", "--stdin"}, content));

  const fs::path git_dir = trim_newline(git.checked({"rev-parse", "--absolute-git-dir"}));
  const fs::path index_file = git_dir / ("choir-index-" + random_uuid());
  const std::map<std::string, std::string> index_env = {{"GIT_INDEX_FILE", index_file.string()}};
  std::string tree;
  try {
    if (current_head.empty()) {
      git.checked({"read-tree", "--empty"}, {}, index_env);
    } else {
      git.checked({"read-tree", current_head}, {}, index_env);
    }
    git.checked({"update-index", "--add", "--cacheinfo", "100644," + blob + "," + path}, {}, index_env);
    tree = trim_newline(git.checked({"write-tree"}, {}, index_env));
  } catch (...) {
    std::error_code ignored;
    fs::remove(index_file, ignored);
    throw;
  }
  std::error_code ignored;
  fs::remove(index_file, ignored);

  const std::int64_t when = request.commit_time.value_or(
      std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count());
  const std::map<std::string, std::string> identity = {
      {"GIT_AUTHOR_NAME", "CHOIR"},          {"GIT_AUTHOR_EMAIL", "choir@localhost"},
      {"GIT_COMMITTER_NAME", "CHOIR"},       {"GIT_COMMITTER_EMAIL", "choir@localhost"},
      {"GIT_AUTHOR_DATE", git_date(when)},   {"GIT_COMMITTER_DATE", git_date(when)},
  };
  std::vector<std::string> commit_args = {"commit-tree", tree};
  if (!current_head.empty()) {
    commit_args.push_back("-p");
    commit_args.push_back(current_head);
  }
  commit_args.push_back("-F");
  commit_args.push_back("-");
  const RevisionId commit = trim_newline(git.checked(commit_args, message, identity));

  const auto swap = git.run({"update-ref", "-m", "choir: commit " + path, "HEAD", commit,
                             current_head.empty() ? std::string(kZeroId) : current_head});
  if (swap.exit_code != 0) throw Error(ErrorCode::kStaleBase, "HEAD moved during commit: " + swap.err);

  if (trim_newline(git.checked({"rev-parse", "--is-bare-repository"})) != "true") {
    git.run({"checkout", "-q", "HEAD", "--", path});
  }
  return commit;
}

std::vector<RevisionRecord> RepositoryHandle::history(std::string_view path) const {
  const Git git{root_};
  const std::string wanted = normalize_document_path(path);
  const RevisionId tip = head();
  if (tip.empty()) throw Error(ErrorCode::kDocumentNotFound, wanted + " has no history");

  std::vector<RevisionRecord> records;
  std::istringstream revisions(git.checked({"log", "--first-parent", "--format=%H", tip, "--", wanted}));
  for (std::string revision; std::getline(revisions, revision);) {
    if (revision.empty()) continue;
    RevisionRecord record;
    record.revision = revision;

    const std::string raw = git.checked({"cat-file", "commit", revision});
    const auto header_end = raw.find("\n\n");
    std::istringstream headers(raw.substr(0, header_end));
    for (std::string line; std::getline(headers, line);) {
      if (line.rfind("parent ", 0) == 0 && !record.parent) {
        record.parent = line.substr(7);
      } else if (line.rfind("author ", 0) == 0) {
        // "author Name <email> <seconds> <tz>"
        const auto tz = line.rfind(' ');
        const auto secs = line.rfind(' ', tz - 1);
        record.author_time = std::stoll(line.substr(secs + 1, tz - secs - 1));
      }
    }
    record.message = header_end == std::string::npos ? std::string() : raw.substr(header_end + 2);

    std::vector<std::string> diff_args = {"diff-tree", "-r", "-z", "--name-only", "--no-commit-id"};
    if (record.parent) {
      diff_args.push_back(*record.parent);
    } else {
      diff_args.push_back("--root");
    }
    diff_args.push_back(revision);
    record.paths_changed = split_nul(git.checked(diff_args));

    try {
      record.context = decode_context(record.message);
    } catch (const Error& e) {
      record.context_error = e.detail();
    }
    records.push_back(std::move(record));
  }
  if (records.empty()) throw Error(ErrorCode::kDocumentNotFound, wanted + " never existed");
  return records;
}

}  // namespace choir
