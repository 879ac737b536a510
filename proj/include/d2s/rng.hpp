#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace d2s {

using Rng = std::mt19937_64;

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

/// Derives an independent generator from a master seed and a stream name.
///
/// Each consumer of randomness in a run (weight init, exploration, environment
/// resets, perception noise, evaluation) draws from its own named stream, so
/// adding draws to one consumer never shifts the sequence seen by another.
/// `index` distinguishes repeated streams of the same name (e.g. per eval point).
inline Rng make_stream(std::uint64_t master_seed, std::string_view name, std::uint64_t index = 0) {
    std::uint64_t s = detail::splitmix64(master_seed);
    s = detail::splitmix64(s ^ detail::fnv1a(name));
    s = detail::splitmix64(s ^ index);
    return Rng(s);
}

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(Rng& rng, double stddev) {
    if (stddev <= 0.0) return 0.0;
    return std::normal_distribution<double>(0.0, stddev)(rng);
}

}  // namespace d2s
