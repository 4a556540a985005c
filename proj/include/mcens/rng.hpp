#pragma once

#include <cstdint>

#include "mcens/dist.hpp"

namespace mcens {

//! Counter-based substream seeding: the seed of replication `index` within
//! `stream` depends only on (master, stream, index), never on scheduling.
constexpr std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::uint64_t stream,
                                    std::uint64_t index = 0)
{
  return splitmix64(splitmix64(splitmix64(master) ^ stream) + index);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0)
{
  return Rng{ derive_seed(master, stream, index) };
}

} // namespace mcens
