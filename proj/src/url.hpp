#pragma once

#include <string>
#include <string_view>

namespace choir::detail {

// Splits "http://host:port/path" into "http://host:port" and "/path".
struct SplitUrl {
  std::string origin;
  std::string path;
};

SplitUrl split_url(std::string_view url);

}  // namespace choir::detail
