#pragma once

#include <cstdint>
#include <random>

namespace viewplan {

// splitmix64 finalizer; good avalanche, used only for seed derivation.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d49bb133111ebULL;
  return x ^ (x >> 31);
}

// Child-seed derivation: mixing is order-sensitive, so (a,b) != (b,a).
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) {
  return splitmix64(parent ^ splitmix64(tag));
}

template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag, Tags... rest) {
  return derive_seed(derive_seed(parent, tag), rest...);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64{splitmix64(seed)};
}

}  // namespace viewplan
