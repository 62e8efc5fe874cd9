#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace topobench {

// Minimal counter-style generator (splitmix64). Used instead of <random>
// engines so that streams keyed by (seed, instance id) stay byte-reproducible
// across platforms and standard library versions.
struct SplitMix64 {
  std::uint64_t state = 0;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Unbiased draw in [0, n) by rejection.
  std::uint64_t next_below(std::uint64_t n) {
    std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

  double next_unit() { return (next() >> 11) * (1.0 / 9007199254740992.0); }
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  SplitMix64 m(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
  return m.next();
}

// Sample k distinct indices from [0, n) in deterministic order of selection
// (partial Fisher-Yates over an index table).
inline std::vector<int> sample_without_replacement(int n, int k, SplitMix64& rng) {
  std::vector<int> pool(static_cast<size_t>(n));
  for (int i = 0; i < n; i++) pool[static_cast<size_t>(i)] = i;
  std::vector<int> out;
  out.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k && i < n; i++) {
    std::uint64_t j = i + rng.next_below(static_cast<std::uint64_t>(n - i));
    std::swap(pool[static_cast<size_t>(i)], pool[j]);
    out.push_back(pool[static_cast<size_t>(i)]);
  }
  return out;
}

}  // namespace topobench
