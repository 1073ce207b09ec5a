#include "choir/error.hpp"
#include "choir/knowledge_index.hpp"
#include "choir/repo_store.hpp"

#include "generators.hpp"
#include "oracles.hpp"
#include "retrieval_check.hpp"
#include "support.hpp"

#include <doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <thread>

using namespace choir;
using namespace choir::testing;

namespace {

std::string joined(const std::vector<Chunk>& chunks) {
  std::string out;
  for (const auto& c : chunks) out += c.text;
  return out;
}

}  // namespace

TEST_CASE("FNV-1a 64 reference vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(fnv1a64("a") == oracle::fnv1a("a"));
}

TEST_CASE("tokenizer lowercases Unicode letter and digit runs") {
  CHECK(tokenize("Hello, wörld! 42x") == std::vector<std::string>{"hello", "wörld", "42x"});
  CHECK(tokenize("ÉCOLE École") == std::vector<std::string>{"école", "école"});
  CHECK(tokenize("中文 テスト") == std::vector<std::string>{"中文", "テスト"});
  CHECK(tokenize("  --- ").empty());
}

TEST_CASE("hashed embedder places single tokens by hash") {
  const HashedEmbedder embedder;
  // fnv("a") % 256 == 140 with the top bit set.
  const auto a = embedder.embed("a");
  CHECK(a.values.size() == 256);
  CHECK(a.values[140] == -1.0);
  CHECK(embedder.embed("A a").values == a.values);
  const auto foobar = embedder.embed("foobar");
  CHECK(foobar.values[232] == -1.0);
  CHECK(embedder.embed("").is_zero());
  CHECK(embedder.embed("!?").is_zero());
  CHECK(embedder.embed("École") == embedder.embed("école"));
}

TEST_CASE("hashed embedder matches the oracle on ASCII text") {
  std::mt19937_64 rng(7);
  for (const std::size_t dim : {8, 64, 256}) {
    const HashedEmbedder embedder(dim);
    for (int i = 0; i < 50; ++i) {
      const auto text = random_words(rng, 1 + rng() % 40);
      const auto got = embedder.embed(text);
      const auto want = oracle::embed(text, dim);
      for (std::size_t k = 0; k < dim; ++k) CHECK(std::fabs(got.values[k] - static_cast<double>(want[k])) < 1e-12);
    }
  }
  CHECK_THROWS_AS(HashedEmbedder(0), Error);
}

TEST_CASE("cosine similarity") {
  const EmbeddingVector a{{1, 0}}, b{{0, 2}}, c{{3, 3}}, z{{0, 0}};
  CHECK(cosine_similarity(a, b) == 0.0);
  CHECK(cosine_similarity(a, c) == doctest::Approx(std::sqrt(0.5)));
  CHECK(cosine_similarity(a, z) == 0.0);
}

TEST_CASE("chunker splits at headings and respects fences") {
  const std::string doc =
      "intro line\n\n# Title\n\ntext\n\n```\n# not a heading\n```\n\n## Sub\n\nmore\n";
  const auto chunks = segment_document("d.md", doc);
  REQUIRE(chunks.size() == 3);
  CHECK(chunks[0].text == "intro line\n\n");
  CHECK(chunks[0].heading_path.empty());
  CHECK(chunks[1].text == "# Title\n\ntext\n\n```\n# not a heading\n```\n\n");
  CHECK(chunks[1].heading_path == std::vector<std::string>{"Title"});
  CHECK(chunks[2].heading_path == std::vector<std::string>{"Title", "Sub"});
  CHECK(chunks[2].chunk_id == "d.md#2");
  CHECK(joined(chunks) == doc);
}

TEST_CASE("chunker splits long sections by paragraph, then hard") {
  std::string para(50, 'x');
  std::string doc = "# H\n\n";
  for (int i = 0; i < 5; ++i) doc += para + "\n\n";
  auto chunks = segment_document("d.md", doc, 60);
  CHECK(joined(chunks) == doc);
  for (const auto& c : chunks) CHECK(c.char_count <= 60);

  // One paragraph of multibyte characters well above the limit.
  std::string wide;
  for (int i = 0; i < 500; ++i) wide += "é中";
  chunks = segment_document("w.md", wide + "\n", 64);
  CHECK(joined(chunks) == wide + "\n");
  for (const auto& c : chunks) {
    CHECK(c.char_count <= 64);
    CHECK(c.char_count == count_code_points(c.text));
  }
}

TEST_CASE("chunker reconstructs fixtures and random documents") {
  for (const auto& entry : fs::directory_iterator(fixtures_dir() / "repo")) {
    const auto content = normalize_content(read_text(entry.path()));
    const auto chunks = segment_document(entry.path().filename().string(), content);
    CHECK(joined(chunks) == content);
  }
  std::mt19937_64 rng(99);
  for (int i = 0; i < 60; ++i) {
    const auto content = normalize_content(random_markdown(rng));
    const auto chunks = segment_document("r.md", content);
    CHECK(joined(chunks) == content);
    for (std::size_t k = 0; k < chunks.size(); ++k) {
      CHECK(chunks[k].ordinal == k);
      CHECK(chunks[k].char_count <= kDefaultMaxChunkChars);
    }
  }
}

TEST_CASE("ranking agrees with the brute-force oracle") {
  std::mt19937_64 rng(1234);
  const HashedEmbedder embedder;
  for (int corpus = 0; corpus < 25; ++corpus) {
    const auto snapshot = random_snapshot(rng, embedder);
    for (int q = 0; q < 4; ++q) {
      const auto query = random_words(rng, 1 + rng() % 5);
      const auto diff = check_retrieval(snapshot, embedder, query, kDefaultRelevanceThreshold, 1e-9);
      CHECK_MESSAGE(diff.empty(), diff);
    }
  }
}

TEST_CASE("zero query, k and threshold edges") {
  const HashedEmbedder embedder;
  std::mt19937_64 rng(5);
  const auto snapshot = random_snapshot(rng, embedder);
  CHECK(query_chunks(snapshot, embedder, "...", 3).empty());
  CHECK(rank_documents(snapshot, embedder, "...").empty());
  CHECK_THROWS_AS(query_chunks(snapshot, embedder, "deadline", 0), Error);
  CHECK(query_chunks(IndexSnapshot{}, embedder, "deadline", 3).empty());
  // Threshold 1 keeps nothing: scores never exceed 1.
  CHECK(rank_documents(snapshot, embedder, "deadline paper", 1.0).empty());
}

TEST_CASE("identical chunks tie-break by path then ordinal") {
  const HashedEmbedder embedder;
  IndexSnapshot snapshot;
  for (const auto* path : {"b.md", "a.md"}) {
    for (auto& c : segment_document(path, "# x\n\ndeadline paper\n\n# y\n\ndeadline paper\n\n")) {
      auto v = embedder.embed(c.text);
      snapshot.entries.push_back({c, v});
    }
  }
  const auto ranked = query_chunks(snapshot, embedder, "deadline", 4);
  REQUIRE(ranked.size() == 4);
  // All four chunks score 1/sqrt(3).
  CHECK(ranked[0].chunk.chunk_id == "a.md#0");
  CHECK(ranked[1].chunk.chunk_id == "a.md#1");
  CHECK(ranked[2].chunk.chunk_id == "b.md#0");
  CHECK(ranked[3].chunk.chunk_id == "b.md#1");
  CHECK(ranked[0].score == doctest::Approx(1 / std::sqrt(3.0)));
  const auto docs = rank_documents(snapshot, embedder, "deadline");
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].doc_path == "a.md");
}

TEST_CASE("knowledge index follows the repository") {
  TempDir tmp;
  seed_fixture_repo(tmp.path());
  auto repo = RepositoryHandle::open(tmp.path());
  KnowledgeIndex index(repo, std::make_shared<HashedEmbedder>());
  const auto first = index.current();
  CHECK(first->repo_revision == repo.head());
  CHECK(first->entries.size() > 4);

  CommitRequest r;
  r.path = "grants.md";
  r.new_content = "# Grants\n\nBudget reports for the grant are due every quarter.\n";
  r.context = {"p", "u", "m", {}, std::nullopt};
  r.change_title = "Add grants";
  repo.commit_update(r);
  index.request_rebuild();
  index.wait_idle();
  const auto second = index.current();
  CHECK(second->repo_revision == repo.head());
  CHECK(second->entries.size() == first->entries.size() + 1);
  // Old snapshot is untouched.
  CHECK(first->repo_revision != second->repo_revision);
  const auto docs = rank_documents(*second, index.embedder(), "quarterly grant budget reports");
  REQUIRE_FALSE(docs.empty());
  CHECK(docs[0].doc_path == "grants.md");
}

TEST_CASE("empty repository gives an empty index") {
  TempDir tmp;
  auto repo = RepositoryHandle::open(tmp.path() / "r", true);
  KnowledgeIndex index(repo, std::make_shared<HashedEmbedder>());
  CHECK(index.current()->entries.empty());
  CHECK(index.current()->repo_revision.empty());
}

TEST_CASE("remote embedder talks JSON over HTTP") {
  httplib::Server server;
  server.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    const auto text = body.at("text").get<std::string>();
    if (text == "wrong size") {
      res.set_content(R"({"values":[1,2]})", "application/json");
    } else if (text == "boom") {
      res.status = 500;
    } else {
      res.set_content(R"({"values":[3,0,4]})", "application/json");
    }
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const RemoteEmbedder embedder("http://127.0.0.1:" + std::to_string(port) + "/embed", 3, 5.0);
  const auto v = embedder.embed("hello");
  CHECK(v.values[0] == doctest::Approx(0.6));
  CHECK(v.values[2] == doctest::Approx(0.8));
  auto code = [&](const char* text) {
    try {
      embedder.embed(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInvalidArgument;
  };
  CHECK(code("wrong size") == ErrorCode::kProviderUnavailable);
  CHECK(code("boom") == ErrorCode::kProviderUnavailable);
  server.stop();
  thread.join();

  const RemoteEmbedder down("http://127.0.0.1:" + std::to_string(port) + "/embed", 3, 0.5);
  CHECK_THROWS_AS(down.embed("x"), Error);
}
