#pragma once

#include <map>
#include <string>
#include <vector>

namespace choir::detail {

struct ProcessResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs argv[0] (PATH lookup) with the given stdin bytes and extra environment
// variables layered over the current environment. Never throws on non-zero
// exit; throws std::system_error if the process cannot be spawned.
ProcessResult run_process(const std::vector<std::string>& argv,
                          const std::string& input = {},
                          const std::map<std::string, std::string>& env = {});

}  // namespace choir::detail
