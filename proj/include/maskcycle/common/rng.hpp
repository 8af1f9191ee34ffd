#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace maskcycle {

using Rng = std::mt19937_64;

// Independent random substream for (seed, index). Serial and parallel
// workers that derive their engine this way produce identical draws.
inline Rng substream(std::uint64_t seed, std::uint64_t index, std::uint64_t salt = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
    return Rng(seq);
}

// Stable (non-std::hash) 64-bit FNV-1a, used for config hashes, stage salts
// and checkpoint checksums.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL)
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline Rng stage_stream(std::uint64_t seed, std::string_view stage)
{
    return substream(seed, 0, fnv1a64(stage));
}

} // namespace maskcycle
