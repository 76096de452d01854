#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tfm {

using Rng = std::mt19937_64;

/// Derives an independent stream for one named component from a root seed.
/// Identical (seed, component) pairs always yield identical streams.
inline Rng make_stream(std::uint64_t seed, std::string_view component) {
  // FNV-1a over the component tag, mixed with the seed.
  std::uint64_t tag = 1469598103934665603ULL;
  for (char ch : component) {
    tag ^= static_cast<unsigned char>(ch);
    tag *= 1099511628211ULL;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return Rng(seq);
}

}  // namespace tfm
