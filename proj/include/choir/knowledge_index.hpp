#pragma once

#include "choir/repo_store.hpp"

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace choir {

inline constexpr std::size_t kDefaultMaxChunkChars = 1600;
inline constexpr std::size_t kDefaultEmbeddingDimension = 256;
inline constexpr double kDefaultRelevanceThreshold = 0.05;
// Ranking compares scores rounded to 1/kScoreResolution.
inline constexpr double kScoreResolution = 1e9;

struct Chunk {
  std::string chunk_id;  // "<doc-path>#<ordinal>"
  std::string doc_path;
  std::vector<std::string> heading_path;
  std::size_t ordinal = 0;
  std::string text;
  std::size_t char_count = 0;  // Unicode code points

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

struct EmbeddingVector {
  std::vector<double> values;

  bool is_zero() const;
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

// Number of code points in UTF-8 text (invalid bytes count as one each).
std::size_t count_code_points(std::string_view text);

// Splits at ATX headings, then at paragraph boundaries, then hard-splits any
// paragraph still above `max_chunk_chars`. Concatenating the chunk texts in
// ordinal order reproduces `content`.
std::vector<Chunk> segment_document(std::string_view path, std::string_view content,
                                    std::size_t max_chunk_chars = kDefaultMaxChunkChars);

std::uint64_t fnv1a64(std::string_view bytes);

// Lowercased maximal runs of Unicode letters/digits, UTF-8 encoded.
std::vector<std::string> tokenize(std::string_view text);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  virtual std::size_t dimension() const = 0;
};

// Signed feature hashing of FNV-1a token hashes, L2-normalized.
class HashedEmbedder final : public Embedder {
 public:
  explicit HashedEmbedder(std::size_t dimension = kDefaultEmbeddingDimension);
  EmbeddingVector embed(std::string_view text) const override;
  std::size_t dimension() const override { return dimension_; }

 private:
  std::size_t dimension_;
};

// POSTs {"text": ...} to an HTTP endpoint and expects {"values": [...]}. The
// returned vector is L2-normalized locally. Failures raise ProviderUnavailable.
class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(std::string endpoint, std::size_t dimension, double timeout_secs = 30.0);
  EmbeddingVector embed(std::string_view text) const override;
  std::size_t dimension() const override { return dimension_; }

 private:
  std::string endpoint_;
  std::size_t dimension_;
  double timeout_secs_;
};

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

struct IndexEntry {
  Chunk chunk;
  EmbeddingVector vector;

  friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

struct IndexSnapshot {
  RevisionId repo_revision;
  std::vector<IndexEntry> entries;
};

struct ScoredChunk {
  Chunk chunk;
  double score = 0.0;
};

struct ScoredDocument {
  std::string doc_path;
  double score = 0.0;
};

IndexSnapshot build_index(const RepositoryHandle& repo, const Embedder& embedder,
                          std::size_t max_chunk_chars = kDefaultMaxChunkChars);

// Descending cosine; ties (equal at 1e-9) by (doc_path, ordinal). Zero query -> {}.
std::vector<ScoredChunk> query_chunks(const IndexSnapshot& snapshot, const Embedder& embedder, std::string_view text,
                                      std::size_t k);

// Per-document max chunk score above `relevance_threshold`; descending, ties by path.
std::vector<ScoredDocument> rank_documents(const IndexSnapshot& snapshot, const Embedder& embedder,
                                           std::string_view text,
                                           double relevance_threshold = kDefaultRelevanceThreshold);

// Holds the current snapshot and swaps it atomically on rebuild. Rebuilds can
// run inline or on a background worker that coalesces pending requests.
class KnowledgeIndex {
 public:
  KnowledgeIndex(const RepositoryHandle& repo, std::shared_ptr<const Embedder> embedder,
                 std::size_t max_chunk_chars = kDefaultMaxChunkChars);
  ~KnowledgeIndex();

  KnowledgeIndex(const KnowledgeIndex&) = delete;
  KnowledgeIndex& operator=(const KnowledgeIndex&) = delete;

  std::shared_ptr<const IndexSnapshot> current() const;
  const Embedder& embedder() const { return *embedder_; }

  std::shared_ptr<const IndexSnapshot> rebuild();
  void request_rebuild();
  // Blocks until no rebuild is queued or running.
  void wait_idle();

 private:
  void worker_loop();

  const RepositoryHandle& repo_;
  std::shared_ptr<const Embedder> embedder_;
  std::size_t max_chunk_chars_;

  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const IndexSnapshot> snapshot_;

  std::mutex worker_mutex_;
  std::condition_variable worker_cv_;
  bool pending_ = false;
  bool running_ = false;
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace choir
