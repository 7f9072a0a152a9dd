#pragma once

#include <cstdint>
#include <string_view>

namespace radimpute {

// splitmix64 finalizer; used to derive independent per-stage RNG seeds
// from one master seed so that pipeline stages stay decoupled.
inline std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  return mix_seed(seed ^ mix_seed(salt));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return mix_seed(seed, h);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag, std::uint64_t a,
                              std::uint64_t b = 0) {
  return mix_seed(mix_seed(seed, tag) ^ mix_seed(a), b);
}

}  // namespace radimpute
