#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace egopose {

using Rng = std::mt19937_64;

// Seed splitting: every consumer of randomness names its stream, and the
// stream seed is splitmix64(seed ^ fnv1a64(name)). Streams with different
// names are decorrelated; the same (seed, name) always yields the same stream.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index);

inline Rng make_rng(std::uint64_t seed, std::string_view stream) {
  return Rng(derive_seed(seed, stream));
}

inline Rng make_rng(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
  return Rng(derive_seed(seed, stream, index));
}

// Distribution helpers with a fixed algorithm, so streams do not depend on
// the standard library's distribution implementations.
double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
double standard_normal(Rng& rng);
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

}  // namespace egopose
