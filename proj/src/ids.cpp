#include "choir/ids.hpp"

#include <boost/uuid/name_generator_sha1.hpp>
#include <boost/uuid/random_generator.hpp>
#include <boost/uuid/uuid_io.hpp>

#include <cctype>
#include <mutex>

namespace choir {
namespace {

// Fixed namespace for name-based ids; any constant UUID works.
constexpr boost::uuids::uuid kIdNamespace = {{0x6c, 0x8e, 0x2a, 0x41, 0x0f, 0x3d, 0x4b, 0x9a,
                                             0xa1, 0x57, 0x2e, 0x90, 0xc4, 0x11, 0xd3, 0x7b}};

}  // namespace

std::string random_uuid() {
  static std::mutex mutex;
  static boost::uuids::random_generator generator;
  std::lock_guard lock(mutex);
  return boost::uuids::to_string(generator());
}

bool is_uuid(std::string_view text) {
  if (text.size() != 36) return false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const bool dash = i == 8 || i == 13 || i == 18 || i == 23;
    if (dash) {
      if (text[i] != '-') return false;
    } else if (!std::isxdigit(static_cast<unsigned char>(text[i]))) {
      return false;
    }
  }
  return true;
}

std::string IdSource::next() {
  if (!seed_) return random_uuid();
  boost::uuids::name_generator_sha1 generator(kIdNamespace);
  return boost::uuids::to_string(generator(*seed_ + "/" + std::to_string(counter_++)));
}

}  // namespace choir
