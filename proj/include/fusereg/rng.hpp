#ifndef FUSEREG_RNG_HPP
#define FUSEREG_RNG_HPP

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fusereg {

/// Purpose tags for deriving independent substreams from one base seed.
enum class Stream : std::uint64_t {
  Dataset = 1,
  Draws = 2,
  Bootstrap = 3,
  Oracle = 4,
};

namespace detail {
// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
} // namespace detail

/// Derive a child seed from a base seed and a list of tags (replication
/// index, stream purpose, model index, ...). Stable across platforms; the
/// same (seed, tags) always maps to the same child seed, so parallel workers
/// and the CLI share streams with in-process callers.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = detail::mix64(seed);
  for (std::uint64_t t : tags) s = detail::mix64(s ^ detail::mix64(t + 0x632be59bd9b4e019ULL));
  return s;
}

inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t a = 0,
                                 std::uint64_t b = 0) {
  return derive_seed(seed, {static_cast<std::uint64_t>(stream), a, b});
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

} // namespace fusereg

#endif
