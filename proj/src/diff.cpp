#include "choir/diff.hpp"

#include "choir/error.hpp"

#include <algorithm>

namespace choir {
namespace {

void push(EditDiff& diff, DiffOp op, const std::string& line) {
  if (diff.hunks.empty() || diff.hunks.back().op != op) diff.hunks.push_back(DiffHunk{op, {}});
  diff.hunks.back().lines.push_back(line);
}

// Myers' greedy forward search; V is snapshotted per step for backtracking.
std::vector<DiffOp> myers(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto n = static_cast<std::ptrdiff_t>(a.size());
  const auto m = static_cast<std::ptrdiff_t>(b.size());
  const auto max = n + m;
  const auto offset = max + 1;
  std::vector<std::ptrdiff_t> v(static_cast<std::size_t>(2 * max + 3), 0);
  std::vector<std::vector<std::ptrdiff_t>> trace;

  std::ptrdiff_t found_d = -1;
  for (std::ptrdiff_t d = 0; d <= max && found_d < 0; ++d) {
    trace.push_back(v);
    for (std::ptrdiff_t k = -d; k <= d; k += 2) {
      std::ptrdiff_t x;
      if (k == -d || (k != d && v[offset + k - 1] < v[offset + k + 1])) {
        x = v[offset + k + 1];
      } else {
        x = v[offset + k - 1] + 1;
      }
      std::ptrdiff_t y = x - k;
      while (x < n && y < m && a[x] == b[y]) {
        ++x;
        ++y;
      }
      v[offset + k] = x;
      if (x >= n && y >= m) {
        found_d = d;
        break;
      }
    }
  }

  std::vector<DiffOp> ops;
  std::ptrdiff_t x = n;
  std::ptrdiff_t y = m;
  for (std::ptrdiff_t d = found_d; d > 0; --d) {
    const auto& prev = trace[static_cast<std::size_t>(d)];
    const auto k = x - y;
    std::ptrdiff_t prev_k;
    if (k == -d || (k != d && prev[offset + k - 1] < prev[offset + k + 1])) {
      prev_k = k + 1;
    } else {
      prev_k = k - 1;
    }
    const auto prev_x = prev[offset + prev_k];
    const auto prev_y = prev_x - prev_k;
    while (x > prev_x && y > prev_y) {
      ops.push_back(DiffOp::kKeep);
      --x;
      --y;
    }
    ops.push_back(x == prev_x ? DiffOp::kInsert : DiffOp::kDelete);
    x = prev_x;
    y = prev_y;
  }
  while (x > 0 && y > 0) {
    ops.push_back(DiffOp::kKeep);
    --x;
    --y;
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

}  // namespace

std::string_view diff_op_name(DiffOp op) {
  switch (op) {
    case DiffOp::kKeep: return "keep";
    case DiffOp::kDelete: return "delete";
    case DiffOp::kInsert: return "insert";
  }
  return "keep";
}

std::size_t EditDiff::inserted_lines() const {
  std::size_t total = 0;
  for (const auto& hunk : hunks) {
    if (hunk.op == DiffOp::kInsert) total += hunk.lines.size();
  }
  return total;
}

std::size_t EditDiff::deleted_lines() const {
  std::size_t total = 0;
  for (const auto& hunk : hunks) {
    if (hunk.op == DiffOp::kDelete) total += hunk.lines.size();
  }
  return total;
}

std::vector<std::string> split_lines_keep_eol(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto eol = text.find('\n', start);
    const auto end = eol == std::string_view::npos ? text.size() : eol + 1;
    lines.emplace_back(text.substr(start, end - start));
    start = end;
  }
  return lines;
}

EditDiff diff_documents(std::string_view base, std::string_view proposed) {
  const auto a = split_lines_keep_eol(base);
  const auto b = split_lines_keep_eol(proposed);

  std::size_t prefix = 0;
  while (prefix < a.size() && prefix < b.size() && a[prefix] == b[prefix]) ++prefix;
  std::size_t suffix = 0;
  while (suffix < a.size() - prefix && suffix < b.size() - prefix &&
         a[a.size() - 1 - suffix] == b[b.size() - 1 - suffix]) {
    ++suffix;
  }

  const std::vector<std::string> mid_a(a.begin() + static_cast<std::ptrdiff_t>(prefix),
                                       a.end() - static_cast<std::ptrdiff_t>(suffix));
  const std::vector<std::string> mid_b(b.begin() + static_cast<std::ptrdiff_t>(prefix),
                                       b.end() - static_cast<std::ptrdiff_t>(suffix));

  EditDiff diff;
  for (std::size_t i = 0; i < prefix; ++i) push(diff, DiffOp::kKeep, a[i]);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (const auto op : myers(mid_a, mid_b)) {
    switch (op) {
      case DiffOp::kKeep:
        push(diff, op, mid_a[ia++]);
        ++ib;
        break;
      case DiffOp::kDelete:
        push(diff, op, mid_a[ia++]);
        break;
      case DiffOp::kInsert:
        push(diff, op, mid_b[ib++]);
        break;
    }
  }
  for (std::size_t i = a.size() - suffix; i < a.size(); ++i) push(diff, DiffOp::kKeep, a[i]);
  return diff;
}

std::string apply_diff(std::string_view base, const EditDiff& diff) {
  const auto lines = split_lines_keep_eol(base);
  std::size_t cursor = 0;
  std::string out;
  for (const auto& hunk : diff.hunks) {
    for (const auto& line : hunk.lines) {
      if (hunk.op == DiffOp::kInsert) {
        out += line;
        continue;
      }
      if (cursor >= lines.size() || lines[cursor] != line) {
        throw Error(ErrorCode::kInvalidArgument, "diff does not match base at line " + std::to_string(cursor + 1));
      }
      if (hunk.op == DiffOp::kKeep) out += line;
      ++cursor;
    }
  }
  if (cursor != lines.size()) throw Error(ErrorCode::kInvalidArgument, "diff leaves base lines unaccounted for");
  return out;
}

}  // namespace choir
