#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace twophase {

using Rng = std::mt19937_64;

/// Mixes a base seed with a stage tag and index into an independent stream
/// seed. Identical inputs always give the identical seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                          std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed, std::string_view tag,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(seed, tag, index));
}

}  // namespace twophase
