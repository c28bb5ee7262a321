// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace psap {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed and a list of tags
/// (epoch, layer, purpose ...). Every stochastic choice in a run goes
/// through here so that a run is a pure function of its seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (auto t : tags) h = mix(h ^ mix(t));
  return h;
}

// Stream purposes.
enum class Stream : std::uint64_t {
  kInit = 1,
  kShuffle = 2,
  kAugment = 3,
  kReinit = 4,
  kSynthetic = 5,
  kProbe = 6,
};

inline Rng make_rng(std::uint64_t base, Stream s, std::initializer_list<std::uint64_t> tags = {}) {
  std::uint64_t seed = derive_seed(base, {static_cast<std::uint64_t>(s)});
  for (auto t : tags) seed = derive_seed(seed, {t});
  return Rng(seed);
}

}  // namespace psap
