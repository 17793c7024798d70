#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace mosaic::rng {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer.
[[nodiscard]] constexpr std::uint64_t mix(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based key derivation: the stream for (seed, k1, k2, ...) depends
/// only on those values, so any replicate can be regenerated in isolation.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                                  std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = mix(seed);
  for (std::uint64_t k : keys) h = mix(h ^ mix(k + 0x632be59bd9b4e019ULL));
  return h;
}

[[nodiscard]] inline Engine engine(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  return Engine(derive_seed(seed, keys));
}

/// Uniform integer in [0, n) by rejection; portable across standard libraries.
[[nodiscard]] inline std::size_t uniform_index(Engine& eng, std::size_t n) {
  static_assert(Engine::min() == 0 && Engine::max() == ~std::uint64_t{0});
  const std::uint64_t range = static_cast<std::uint64_t>(n);
  // Draws below 2^64 mod range would bias the low residues.
  const std::uint64_t threshold = (0 - range) % range;
  std::uint64_t draw = 0;
  do {
    draw = eng();
  } while (draw < threshold);
  return static_cast<std::size_t>(draw % range);
}

template <class T>
void shuffle(std::span<T> values, Engine& eng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = uniform_index(eng, i);
    std::swap(values[i - 1], values[j]);
  }
}

/// Stream identifiers used with derive_seed so independent consumers of one
/// user seed never share a random stream.
namespace stream {
inline constexpr std::uint64_t kGrouping = 1;
inline constexpr std::uint64_t kPermutation = 2;
inline constexpr std::uint64_t kMeta = 3;
inline constexpr std::uint64_t kBootstrap = 4;
inline constexpr std::uint64_t kNaivePermutation = 5;
inline constexpr std::uint64_t kAnticluster = 6;
inline constexpr std::uint64_t kSimulation = 7;
inline constexpr std::uint64_t kWindow = 8;
inline constexpr std::uint64_t kReplicate = 9;
}  // namespace stream

}  // namespace mosaic::rng
