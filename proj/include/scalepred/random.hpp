#pragma once

#include <cstdint>
#include <random>

namespace scalepred {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Child seed for stream `index` of `parent`. Streams are independent of
/// execution order, so concurrent and sequential runs agree.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
    return splitmix64(parent ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

/// Named stages hash into distinct child streams of a master seed.
inline std::uint64_t derive_seed(std::uint64_t parent, const char* stage) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (const char* p = stage; *p; ++p) {
        h ^= static_cast<unsigned char>(*p);
        h *= 1099511628211ULL;
    }
    return derive_seed(parent, h);
}

}  // namespace scalepred
