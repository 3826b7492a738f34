#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace natlab {

// Fatal configuration / usage error. Thrown on contract violations
// (shape mismatches, malformed files, bad CLI arguments); the CLI
// catches it at top level and exits nonzero.
class FatalError : public std::runtime_error {
public:
  explicit FatalError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void format_parts(std::ostringstream&) {}
template <class A, class... Rest>
void format_parts(std::ostringstream& os, const A& a, const Rest&... rest) {
  os << a;
  format_parts(os, rest...);
}
}  // namespace detail

template <class... Parts>
std::string concat(const Parts&... parts) {
  std::ostringstream os;
  detail::format_parts(os, parts...);
  return os.str();
}

template <class... Parts>
[[noreturn]] void fatal(const Parts&... parts) {
  throw FatalError(concat(parts...));
}

template <class... Parts>
void check(bool cond, const Parts&... parts) {
  if (!cond) fatal(parts...);
}

// 64-bit FNV-1a; used for stable param-name hashing and store fingerprints.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a(s.data(), s.size(), h);
}

}  // namespace natlab
