#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace choir {

std::string random_uuid();

// Returns true for the canonical 8-4-4-4-12 lowercase/uppercase hex form.
bool is_uuid(std::string_view text);

// Source of ids for one unit of work. When seeded, ids are name-based UUIDs
// derived from the seed and a running counter, so re-processing the same
// event yields the same ids. Unseeded sources produce random UUIDs.
class IdSource {
 public:
  IdSource() = default;
  explicit IdSource(std::string seed) : seed_(std::move(seed)) {}

  std::string next();

 private:
  std::optional<std::string> seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace choir
