#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tmr {

// Dense handles into the owning graph's symbol tables.
using EntityId = int;
using RelationId = int;

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LookupError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// FNV-1a. Used for seed derivation and content hashes; must not depend on
// std::hash (not stable across standard libraries).
inline uint64_t fnv1a(const void* bytes, size_t n, uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 1469598103934665603ull) {
  return fnv1a(s.data(), s.size(), h);
}

}  // namespace tmr
