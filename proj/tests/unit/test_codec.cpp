#include "choir/context_codec.hpp"
#include "choir/error.hpp"

#include "generators.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace choir;
using namespace choir::testing;

namespace {

ConversationContext sample_context() {
  return ConversationContext{"p-1", "adnan", "lee",
                             {{"lab", "caleb", "1.0003", "True. How about a month ahead?"},
                              {"lab", "adnan", "1.0004", "Yeah, that sounds safer."}},
                             std::nullopt};
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected choir::Error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("base64 matches RFC 4648 vectors") {
  const std::pair<const char*, const char*> vectors[] = {
      {"", ""},         {"f", "Zg=="},         {"fo", "Zm8="},         {"foo", "Zm9v"},
      {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="}, {"foobar", "Zm9vYmFy"}};
  for (const auto& [plain, encoded] : vectors) {
    CHECK(base64_encode(plain) == encoded);
    CHECK(base64_decode(encoded) == std::optional<std::string>(plain));
  }
}

TEST_CASE("base64 decode is strict") {
  CHECK_FALSE(base64_decode("Zg="));
  CHECK_FALSE(base64_decode("Z!=="));
  CHECK_FALSE(base64_decode("Zm9v\n"));
  CHECK_FALSE(base64_decode("Zm 9v"));
  CHECK_FALSE(base64_decode("Zg==Zg=="));
}

TEST_CASE("canonical JSON has fixed key order and null summary") {
  CHECK(canonical_context_json(sample_context()) ==
        R"({"messages":[{"channel_id":"lab","author_id":"caleb","timestamp":"1.0003","text":"True. How about a month ahead?"},)"
        R"({"channel_id":"lab","author_id":"adnan","timestamp":"1.0004","text":"Yeah, that sounds safer."}],"summary":null})");
  auto ctx = sample_context();
  ctx.messages.clear();
  ctx.summary = "";
  CHECK(canonical_context_json(ctx) == R"({"messages":[],"summary":""})");
}

TEST_CASE("commit message layout is bit exact") {
  const auto ctx = sample_context();
  const auto json = canonical_context_json(ctx);
  // Independent base64 via coreutils.
  auto b64 = shell("printf %s " + quote(json) + " | base64 -w0").out;
  const auto expected = "choir: update echolabs-policy.md\n\nAdd 2 notes to Paper and Talk Writing\n\n"
                        "Choir-Proposal-Id: p-1\nChoir-Requester: adnan\nChoir-Approver: lee\nChoir-Context: " +
                        b64 + "\n";
  CHECK(encode_commit_message(CommitKind::kUpdate, "echolabs-policy.md", "Add 2 notes to Paper and Talk Writing", ctx) ==
        expected);
  CHECK(encode_commit_message(CommitKind::kCreate, "new.md", "Create", ctx).rfind("choir: create new.md\n\n", 0) == 0);
}

TEST_CASE("git recognises the four trailers") {
  const auto message = encode_commit_message(CommitKind::kUpdate, "a.md", "t", sample_context());
  const auto parsed = shell("printf %s " + quote(message) + " | git interpret-trailers --parse").out;
  CHECK(parsed.find("Choir-Proposal-Id: p-1\n") != std::string::npos);
  CHECK(parsed.find("Choir-Requester: adnan\n") != std::string::npos);
  CHECK(parsed.find("Choir-Approver: lee\n") != std::string::npos);
  CHECK(parsed.find("Choir-Context: ") != std::string::npos);
}

TEST_CASE("decode round-trips randomized contexts") {
  std::mt19937_64 rng(20260304);
  for (int i = 0; i < 300; ++i) {
    const auto ctx = random_context(rng);
    const auto message = encode_commit_message(i % 2 ? CommitKind::kCreate : CommitKind::kUpdate, "d.md", "title", ctx);
    const auto decoded = decode_context(message);
    REQUIRE(decoded.has_value());
    CHECK(*decoded == ctx);
  }
}

TEST_CASE("messages without trailers decode to nothing") {
  CHECK_FALSE(decode_context("Fix typo\n\nSigned-off-by: someone <a@b>\n"));
  CHECK_FALSE(decode_context(""));
  // Trailer keys quoted inside the body, not in the final paragraph.
  CHECK_FALSE(decode_context("Notes\n\nChoir-Requester: x\n\nplain last paragraph\n"));
}

TEST_CASE("damaged trailers are MalformedTrailer") {
  const auto good = encode_commit_message(CommitKind::kUpdate, "a.md", "t", sample_context());
  auto without_context = good.substr(0, good.find("Choir-Context:"));
  CHECK(code_of([&] { decode_context(without_context); }) == ErrorCode::kMalformedTrailer);

  const auto head = good.substr(0, good.find("Choir-Context: ") + 15);
  CHECK(code_of([&] { decode_context(head + "not*base64\n"); }) == ErrorCode::kMalformedTrailer);
  CHECK(code_of([&] { decode_context(head + base64_encode("{\"messages\":3}") + "\n"); }) ==
        ErrorCode::kMalformedTrailer);
  CHECK(code_of([&] { decode_context(head + base64_encode("[]") + "\n"); }) == ErrorCode::kMalformedTrailer);
}

TEST_CASE("encode rejects values that cannot round-trip") {
  auto ctx = sample_context();
  CHECK(code_of([&] { encode_commit_message(CommitKind::kUpdate, "a.md", "two\nlines", ctx); }) ==
        ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { encode_commit_message(CommitKind::kUpdate, "a.md", "", ctx); }) == ErrorCode::kInvalidArgument);
  ctx.requester_id = "a\rb";
  CHECK(code_of([&] { encode_context(ctx); }) == ErrorCode::kInvalidArgument);
  ctx = sample_context();
  ctx.messages[0].text.clear();
  CHECK(code_of([&] { encode_context(ctx); }) == ErrorCode::kInvalidArgument);
  ctx = sample_context();
  ctx.messages[0].text = "bad \xff byte";
  CHECK(code_of([&] { encode_context(ctx); }) == ErrorCode::kInvalidArgument);
}
