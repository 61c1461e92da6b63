// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace unidiff {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives independent per-purpose streams from one root seed, so adding a
// consumer of randomness never shifts the draws of another.
class SeedSplitter {
 public:
  explicit SeedSplitter(std::uint64_t root) : root_(root) {}

  std::uint64_t seed(std::string_view stream, std::uint64_t index = 0) const {
    return splitmix64(splitmix64(root_ ^ fnv1a(stream)) + index);
  }
  Rng rng(std::string_view stream, std::uint64_t index = 0) const {
    return Rng(seed(stream, index));
  }
  std::uint64_t root() const { return root_; }

 private:
  std::uint64_t root_;
};

}  // namespace unidiff
