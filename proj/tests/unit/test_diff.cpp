#include "choir/diff.hpp"
#include "choir/error.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace choir;
using namespace choir::testing;

namespace {

std::size_t kept(const EditDiff& d) {
  std::size_t n = 0;
  for (const auto& h : d.hunks) {
    if (h.op == DiffOp::kKeep) n += h.lines.size();
  }
  return n;
}

std::string random_lines(std::mt19937_64& rng, std::size_t max_lines) {
  static const char* pool[] = {"a\n", "b\n", "c\n", "## Head\n", "\n", "* item\n", "tail"};
  std::string out;
  const auto n = rng() % (max_lines + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string line = pool[rng() % 6];
    out += line;
  }
  if (rng() % 4 == 0) out += pool[6];
  return out;
}

}  // namespace

TEST_CASE("split keeps line endings") {
  CHECK(split_lines_keep_eol("a\nb") == std::vector<std::string>{"a\n", "b"});
  CHECK(split_lines_keep_eol("a\n\n") == std::vector<std::string>{"a\n", "\n"});
  CHECK(split_lines_keep_eol("").empty());
}

TEST_CASE("simple diffs") {
  CHECK(diff_documents("", "").hunks.empty());
  const auto same = diff_documents("a\nb\n", "a\nb\n");
  REQUIRE(same.hunks.size() == 1);
  CHECK(same.hunks[0].op == DiffOp::kKeep);

  const auto d = diff_documents("a\nb\nc\n", "a\nx\nc\nd\n");
  CHECK(d.inserted_lines() == 2);
  CHECK(d.deleted_lines() == 1);
  REQUIRE(d.hunks.size() == 5);
  CHECK(d.hunks[0] == DiffHunk{DiffOp::kKeep, {"a\n"}});
  CHECK(d.hunks[1] == DiffHunk{DiffOp::kDelete, {"b\n"}});
  CHECK(d.hunks[2] == DiffHunk{DiffOp::kInsert, {"x\n"}});
  CHECK(d.hunks[3] == DiffHunk{DiffOp::kKeep, {"c\n"}});
  CHECK(d.hunks[4] == DiffHunk{DiffOp::kInsert, {"d\n"}});
}

TEST_CASE("missing final newline is a distinct line") {
  const auto d = diff_documents("a\nb", "a\nb\n");
  CHECK(d.deleted_lines() == 1);
  CHECK(d.inserted_lines() == 1);
  CHECK(apply_diff("a\nb", d) == "a\nb\n");
}

TEST_CASE("diffs are minimal, well formed and re-applicable") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 400; ++i) {
    const auto base = random_lines(rng, 30);
    const auto proposed = random_lines(rng, 30);
    const auto d = diff_documents(base, proposed);
    CHECK(apply_diff(base, d) == proposed);
    CHECK(kept(d) == oracle::lcs_length(split_lines_keep_eol(base), split_lines_keep_eol(proposed)));
    for (std::size_t h = 0; h < d.hunks.size(); ++h) {
      CHECK_FALSE(d.hunks[h].lines.empty());
      if (h > 0) CHECK(d.hunks[h].op != d.hunks[h - 1].op);
    }
  }
}

TEST_CASE("apply rejects a diff for other text") {
  const auto d = diff_documents("a\nb\n", "a\nc\n");
  CHECK_THROWS_AS(apply_diff("a\nx\n", d), Error);
  CHECK_THROWS_AS(apply_diff("a\n", d), Error);
  CHECK_THROWS_AS(apply_diff("a\nb\nextra\n", d), Error);
}
