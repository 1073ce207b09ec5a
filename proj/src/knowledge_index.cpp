#include "choir/knowledge_index.hpp"

#include "choir/error.hpp"
#include "url.hpp"

#include <httplib.h>
#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>

namespace choir {
namespace {

bool is_continuation(unsigned char byte) { return (byte & 0xC0) == 0x80; }

// Byte offset after advancing `count` code points from `from`.
std::size_t advance_code_points(std::string_view text, std::size_t from, std::size_t count) {
  std::size_t pos = from;
  while (pos < text.size() && count > 0) {
    ++pos;
    while (pos < text.size() && is_continuation(static_cast<unsigned char>(text[pos]))) ++pos;
    --count;
  }
  return pos;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto eol = text.find('\n', start);
    const auto end = eol == std::string_view::npos ? text.size() : eol + 1;
    lines.push_back(text.substr(start, end - start));
    start = end;
  }
  return lines;
}

std::string_view strip_eol(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  return line;
}

bool is_blank(std::string_view line) {
  return strip_eol(line).find_first_not_of(" \t") == std::string_view::npos;
}

std::size_t leading_spaces(std::string_view line) {
  std::size_t n = 0;
  while (n < line.size() && line[n] == ' ') ++n;
  return n;
}

struct Fence {
  char marker = 0;
  std::size_t length = 0;
};

// Recognizes an opening/closing code fence line.
std::optional<Fence> fence_of(std::string_view line) {
  line = strip_eol(line);
  const auto indent = leading_spaces(line);
  if (indent > 3 || indent >= line.size()) return std::nullopt;
  const char marker = line[indent];
  if (marker != '`' && marker != '~') return std::nullopt;
  std::size_t length = 0;
  while (indent + length < line.size() && line[indent + length] == marker) ++length;
  if (length < 3) return std::nullopt;
  return Fence{marker, length};
}

struct Heading {
  int level = 0;
  std::string title;
};

std::optional<Heading> heading_of(std::string_view line) {
  line = strip_eol(line);
  const auto indent = leading_spaces(line);
  if (indent > 3) return std::nullopt;
  std::size_t level = 0;
  while (indent + level < line.size() && line[indent + level] == '#') ++level;
  if (level < 1 || level > 6) return std::nullopt;
  const auto after = indent + level;
  if (after < line.size() && line[after] != ' ' && line[after] != '\t') return std::nullopt;

  std::string_view title = after < line.size() ? line.substr(after) : std::string_view();
  auto trim = [](std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return std::string_view();
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
  };
  title = trim(title);
  // Optional closing sequence: spaces then only '#'.
  const auto last_non_hash = title.find_last_not_of('#');
  if (last_non_hash == std::string_view::npos) {
    title = {};
  } else if (last_non_hash + 1 < title.size() && (title[last_non_hash] == ' ' || title[last_non_hash] == '\t')) {
    title = trim(title.substr(0, last_non_hash));
  }
  return Heading{static_cast<int>(level), std::string(title)};
}

struct Section {
  std::vector<std::string> heading_path;
  std::vector<std::string_view> lines;
};

std::vector<Section> split_sections(std::string_view content) {
  std::vector<Section> sections;
  std::vector<std::pair<int, std::string>> stack;
  std::optional<Fence> open_fence;
  Section current;
  for (const auto line : split_lines(content)) {
    if (const auto fence = fence_of(line)) {
      if (!open_fence) {
        open_fence = fence;
      } else if (fence->marker == open_fence->marker && fence->length >= open_fence->length) {
        open_fence.reset();
      }
    } else if (!open_fence) {
      if (auto heading = heading_of(line)) {
        if (!current.lines.empty()) sections.push_back(std::move(current));
        while (!stack.empty() && stack.back().first >= heading->level) stack.pop_back();
        stack.emplace_back(heading->level, std::move(heading->title));
        current = Section{};
        for (const auto& [level, title] : stack) current.heading_path.push_back(title);
      }
    }
    current.lines.push_back(line);
  }
  if (!current.lines.empty()) sections.push_back(std::move(current));
  return sections;
}

// A paragraph with its trailing blank lines; leading blanks join the first.
std::vector<std::string_view> split_paragraphs(std::string_view section_text) {
  std::vector<std::string_view> paragraphs;
  std::size_t start = 0;
  std::size_t pos = 0;
  bool seen_content = false;
  bool previous_blank = false;
  for (const auto line : split_lines(section_text)) {
    const bool blank = is_blank(line);
    if (!blank && seen_content && previous_blank) {
      paragraphs.push_back(section_text.substr(start, pos - start));
      start = pos;
    }
    if (!blank) seen_content = true;
    previous_blank = blank;
    pos += line.size();
  }
  if (pos > start) paragraphs.push_back(section_text.substr(start, pos - start));
  return paragraphs;
}

void normalize_in_place(std::vector<double>& values) {
  double sum = 0.0;
  for (const double v : values) sum += v * v;
  if (sum == 0.0) {
    std::fill(values.begin(), values.end(), 0.0);
    return;
  }
  const double norm = std::sqrt(sum);
  for (double& v : values) v /= norm;
}

// Scores closer than the grid are ties: rounding noise must not override
// the (doc_path, ordinal) order.
std::int64_t score_key(double score) { return std::llround(score * kScoreResolution); }

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = std::min(a.size(), b.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

bool chunk_order(const ScoredChunk& a, const ScoredChunk& b) {
  const auto ka = score_key(a.score);
  const auto kb = score_key(b.score);
  if (ka != kb) return ka > kb;
  if (a.chunk.doc_path != b.chunk.doc_path) return a.chunk.doc_path < b.chunk.doc_path;
  return a.chunk.ordinal < b.chunk.ordinal;
}

std::vector<double> scores_for(const IndexSnapshot& snapshot, const EmbeddingVector& query) {
  std::vector<double> scores;
  scores.reserve(snapshot.entries.size());
  for (const auto& entry : snapshot.entries) {
    scores.push_back(entry.vector.is_zero() ? 0.0 : std::clamp(dot(query.values, entry.vector.values), -1.0, 1.0));
  }
  return scores;
}

}  // namespace

namespace detail {

SplitUrl split_url(std::string_view url) {
  const auto scheme = url.find("://");
  const auto path_start = url.find('/', scheme == std::string_view::npos ? 0 : scheme + 3);
  if (path_start == std::string_view::npos) return {std::string(url), "/"};
  return {std::string(url.substr(0, path_start)), std::string(url.substr(path_start))};
}

}  // namespace detail

bool EmbeddingVector::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

std::size_t count_code_points(std::string_view text) {
  return static_cast<std::size_t>(std::count_if(
      text.begin(), text.end(), [](char c) { return !is_continuation(static_cast<unsigned char>(c)); }));
}

std::vector<Chunk> segment_document(std::string_view path, std::string_view content, std::size_t max_chunk_chars) {
  if (max_chunk_chars == 0) throw Error(ErrorCode::kInvalidArgument, "max_chunk_chars must be positive");
  std::vector<Chunk> chunks;
  auto emit = [&](const std::vector<std::string>& heading_path, std::string_view text) {
    Chunk chunk;
    chunk.doc_path = std::string(path);
    chunk.ordinal = chunks.size();
    chunk.chunk_id = chunk.doc_path + "#" + std::to_string(chunk.ordinal);
    chunk.heading_path = heading_path;
    chunk.text = std::string(text);
    chunk.char_count = count_code_points(text);
    chunks.push_back(std::move(chunk));
  };

  for (const auto& section : split_sections(content)) {
    const char* begin = section.lines.front().data();
    const char* end = section.lines.back().data() + section.lines.back().size();
    const std::string_view text(begin, static_cast<std::size_t>(end - begin));
    if (count_code_points(text) <= max_chunk_chars) {
      emit(section.heading_path, text);
      continue;
    }

    std::string_view pending;
    std::size_t pending_chars = 0;
    auto flush = [&] {
      if (!pending.empty()) emit(section.heading_path, pending);
      pending = {};
      pending_chars = 0;
    };
    auto extend = [&](std::string_view piece) {
      pending = pending.empty() ? piece : std::string_view(pending.data(), pending.size() + piece.size());
      pending_chars += count_code_points(piece);
    };

    for (const auto paragraph : split_paragraphs(text)) {
      const auto chars = count_code_points(paragraph);
      if (pending_chars + chars <= max_chunk_chars) {
        extend(paragraph);
        continue;
      }
      flush();
      if (chars <= max_chunk_chars) {
        extend(paragraph);
        continue;
      }
      std::size_t pos = 0;
      while (pos < paragraph.size()) {
        const auto next = advance_code_points(paragraph, pos, max_chunk_chars);
        const auto piece = paragraph.substr(pos, next - pos);
        if (next < paragraph.size()) {
          emit(section.heading_path, piece);
        } else {
          extend(piece);
        }
        pos = next;
      }
    }
    flush();
  }
  return chunks;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string token;
  const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 c = 0;
    U8_NEXT(bytes, i, length, c);
    if (c >= 0) c = u_tolower(c);
    if (c >= 0 && u_isalnum(c)) {
      char buffer[U8_MAX_LENGTH];
      int32_t n = 0;
      U8_APPEND_UNSAFE(reinterpret_cast<uint8_t*>(buffer), n, c);
      token.append(buffer, static_cast<std::size_t>(n));
    } else if (!token.empty()) {
      tokens.push_back(std::move(token));
      token.clear();
    }
  }
  if (!token.empty()) tokens.push_back(std::move(token));
  return tokens;
}

HashedEmbedder::HashedEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension == 0) throw Error(ErrorCode::kInvalidArgument, "embedding dimension must be positive");
}

EmbeddingVector HashedEmbedder::embed(std::string_view text) const {
  EmbeddingVector vector{std::vector<double>(dimension_, 0.0)};
  for (const auto& token : tokenize(text)) {
    const auto hash = fnv1a64(token);
    vector.values[hash % dimension_] += (hash >> 63) == 0 ? 1.0 : -1.0;
  }
  normalize_in_place(vector.values);
  return vector;
}

RemoteEmbedder::RemoteEmbedder(std::string endpoint, std::size_t dimension, double timeout_secs)
    : endpoint_(std::move(endpoint)), dimension_(dimension), timeout_secs_(timeout_secs) {}

EmbeddingVector RemoteEmbedder::embed(std::string_view text) const {
  const auto url = detail::split_url(endpoint_);
  httplib::Client client(url.origin);
  const auto timeout = std::chrono::duration<double>(timeout_secs_);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  const auto response = client.Post(url.path, nlohmann::json{{"text", std::string(text)}}.dump(), "application/json");
  if (!response) {
    throw Error(ErrorCode::kProviderUnavailable, "embedder " + endpoint_ + ": " + httplib::to_string(response.error()));
  }
  if (response->status != 200) {
    throw Error(ErrorCode::kProviderUnavailable, "embedder " + endpoint_ + " returned " + std::to_string(response->status));
  }
  EmbeddingVector vector;
  try {
    vector.values = nlohmann::json::parse(response->body).at("values").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kProviderUnavailable, std::string("embedder response unreadable: ") + e.what());
  }
  if (vector.values.size() != dimension_) {
    throw Error(ErrorCode::kProviderUnavailable, "embedder returned dimension " + std::to_string(vector.values.size()));
  }
  normalize_in_place(vector.values);
  return vector;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  const double na = std::sqrt(dot(a.values, a.values));
  const double nb = std::sqrt(dot(b.values, b.values));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(a.values, b.values) / (na * nb), -1.0, 1.0);
}

IndexSnapshot build_index(const RepositoryHandle& repo, const Embedder& embedder, std::size_t max_chunk_chars) {
  IndexSnapshot snapshot;
  snapshot.repo_revision = repo.head();
  if (snapshot.repo_revision.empty()) return snapshot;
  for (const auto& path : repo.list_documents(snapshot.repo_revision)) {
    const auto document = repo.read_document(path, snapshot.repo_revision);
    for (auto& chunk : segment_document(path, document.content, max_chunk_chars)) {
      auto vector = embedder.embed(chunk.text);
      snapshot.entries.push_back(IndexEntry{std::move(chunk), std::move(vector)});
    }
  }
  return snapshot;
}

std::vector<ScoredChunk> query_chunks(const IndexSnapshot& snapshot, const Embedder& embedder, std::string_view text,
                                      std::size_t k) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be at least 1");
  const auto query = embedder.embed(text);
  if (query.is_zero()) return {};
  const auto scores = scores_for(snapshot, query);
  std::vector<ScoredChunk> ranked;
  ranked.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) ranked.push_back(ScoredChunk{snapshot.entries[i].chunk, scores[i]});
  const auto keep = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(), chunk_order);
  ranked.resize(keep);
  return ranked;
}

std::vector<ScoredDocument> rank_documents(const IndexSnapshot& snapshot, const Embedder& embedder,
                                           std::string_view text, double relevance_threshold) {
  const auto query = embedder.embed(text);
  if (query.is_zero()) return {};
  const auto scores = scores_for(snapshot, query);
  std::map<std::string, double> best;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& path = snapshot.entries[i].chunk.doc_path;
    const auto it = best.find(path);
    if (it == best.end() || scores[i] > it->second) best[path] = scores[i];
  }
  std::vector<ScoredDocument> ranked;
  for (const auto& [path, score] : best) {
    if (score > relevance_threshold) ranked.push_back(ScoredDocument{path, score});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const ScoredDocument& a, const ScoredDocument& b) { return score_key(a.score) > score_key(b.score); });
  return ranked;
}

KnowledgeIndex::KnowledgeIndex(const RepositoryHandle& repo, std::shared_ptr<const Embedder> embedder,
                               std::size_t max_chunk_chars)
    : repo_(repo), embedder_(std::move(embedder)), max_chunk_chars_(max_chunk_chars) {
  rebuild();
}

KnowledgeIndex::~KnowledgeIndex() {
  {
    std::lock_guard lock(worker_mutex_);
    stopping_ = true;
  }
  worker_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

std::shared_ptr<const IndexSnapshot> KnowledgeIndex::current() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

std::shared_ptr<const IndexSnapshot> KnowledgeIndex::rebuild() {
  auto fresh = std::make_shared<const IndexSnapshot>(build_index(repo_, *embedder_, max_chunk_chars_));
  std::lock_guard lock(snapshot_mutex_);
  snapshot_ = fresh;
  return fresh;
}

void KnowledgeIndex::request_rebuild() {
  {
    std::lock_guard lock(worker_mutex_);
    pending_ = true;
    if (!worker_.joinable()) worker_ = std::thread([this] { worker_loop(); });
  }
  worker_cv_.notify_all();
}

void KnowledgeIndex::wait_idle() {
  std::unique_lock lock(worker_mutex_);
  worker_cv_.wait(lock, [this] { return stopping_ || (!pending_ && !running_); });
}

void KnowledgeIndex::worker_loop() {
  std::unique_lock lock(worker_mutex_);
  while (true) {
    worker_cv_.wait(lock, [this] { return stopping_ || pending_; });
    if (stopping_) return;
    pending_ = false;
    running_ = true;
    lock.unlock();
    try {
      rebuild();
    } catch (const std::exception&) {
      // The previous snapshot stays current; the next change retries.
    }
    lock.lock();
    running_ = false;
    worker_cv_.notify_all();
  }
}

}  // namespace choir
