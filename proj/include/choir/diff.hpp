#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace choir {

enum class DiffOp { kKeep, kDelete, kInsert };

std::string_view diff_op_name(DiffOp op);

struct DiffHunk {
  DiffOp op = DiffOp::kKeep;
  // Lines keep their trailing '\n'; only the final line of a text may lack one.
  std::vector<std::string> lines;

  friend bool operator==(const DiffHunk&, const DiffHunk&) = default;
};

struct EditDiff {
  std::vector<DiffHunk> hunks;

  std::size_t inserted_lines() const;
  std::size_t deleted_lines() const;
  friend bool operator==(const EditDiff&, const EditDiff&) = default;
};

// Splits after every '\n'.
std::vector<std::string> split_lines_keep_eol(std::string_view text);

// Minimal line-level edit script (Myers), adjacent hunks of the same op merged.
EditDiff diff_documents(std::string_view base, std::string_view proposed);

// Replays keep/delete against `base` and returns the edited text. Throws
// Error(kInvalidArgument) when the diff does not match `base`.
std::string apply_diff(std::string_view base, const EditDiff& diff);

}  // namespace choir
