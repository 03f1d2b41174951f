#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace chartsample {

/// Seedable 64-bit generator whose output sequence is fixed by the C++
/// standard (mt19937_64). All distributions used by the project are built on
/// top of raw draws here, so sequences are identical across platforms and
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, bound). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform integer in [lo, hi] (inclusive).
  std::int64_t between(std::int64_t lo, std::int64_t hi);

  /// Uniform double in [0, 1) with 53 random bits.
  double unit();

  bool coin() { return (next() >> 63) != 0; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Order-sensitive combination of two 64-bit values.
std::uint64_t stable_hash(std::uint64_t a, std::uint64_t b);

/// FNV-1a 64 over bytes; used for tags, image digests and fingerprints.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Derives an independent stream seed from a parent seed and a label.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) {
  return stable_hash(parent, fnv1a(label));
}

}  // namespace chartsample
