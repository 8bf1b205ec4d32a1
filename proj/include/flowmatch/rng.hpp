#pragma once

#include <cstdint>
#include <random>

namespace flowmatch {

using Rng = std::mt19937_64;

// Every random draw in the library comes from a stream identified by
// (master seed, purpose, index). Streams for different purposes never share
// state, so e.g. changing the Monte Carlo sample count does not perturb the
// training data.
enum class StreamPurpose : std::uint64_t {
  kInit = 1,
  kData = 2,
  kPairingTime = 3,
  kPairing = 4,
  kMonteCarlo = 5,
  kEval = 6,
};

inline Rng make_stream(std::uint64_t seed, StreamPurpose purpose,
                       std::uint64_t index = 0, std::uint64_t sub = 0) {
  const auto lo = [](std::uint64_t v) {
    return static_cast<std::uint32_t>(v & 0xffffffffu);
  };
  const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  const auto p = static_cast<std::uint64_t>(purpose);
  std::seed_seq seq{lo(seed), hi(seed), lo(p),   hi(p),
                    lo(index), hi(index), lo(sub), hi(sub)};
  return Rng(seq);
}

}  // namespace flowmatch
