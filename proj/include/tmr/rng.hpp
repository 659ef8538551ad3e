#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tmr/common.hpp"

namespace tmr {

// xoshiro256** seeded through splitmix64. Self-contained so that streams are
// bit-identical across platforms and standard libraries; checkpoints persist
// the four state words.
struct Rng {
  std::array<uint64_t, 4> s{};

  explicit Rng(uint64_t seed = 0) { reseed(seed); }

  void reseed(uint64_t seed) {
    uint64_t x = seed;
    for (auto& w : s) w = splitmix64(x);
  }

  static uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t next() {
    auto rotl = [](uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
    const uint64_t result = rotl(s[1] * 5, 7) * 9;
    const uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  uint64_t below(uint64_t n) {
    return uint64_t((static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // Derive an independent stream, e.g. one per entity or per rollout.
  Rng fork(uint64_t salt) {
    Rng r;
    uint64_t x = next() ^ (salt * 0x9e3779b97f4a7c15ull);
    for (auto& w : r.s) w = splitmix64(x);
    return r;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string state_string() const {
    std::string out;
    for (auto w : s) out += std::to_string(w) + " ";
    return out;
  }

  void restore_state(const std::string& str) {
    size_t pos = 0;
    for (auto& w : s) {
      size_t used = 0;
      w = std::stoull(str.substr(pos), &used);
      pos += used + 1;
    }
  }
};

// Deterministic stream keyed by (seed, name); used for per-entity synthetic
// features so the result is independent of entity id assignment.
inline Rng named_rng(uint64_t seed, const std::string& name) {
  uint64_t h = fnv1a(name);
  h = fnv1a(&seed, sizeof(seed), h);
  return Rng(h);
}

}  // namespace tmr
