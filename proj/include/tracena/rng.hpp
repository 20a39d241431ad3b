#pragma once

#include <cmath>
#include <cstdint>
#include <random>

// Deterministic random primitives. All sampling in the toolkit goes through
// these helpers instead of std:: distributions, whose output is
// implementation-defined; the algorithms below are fixed so that seeded runs
// reproduce bit-identically on every platform.
//
// Stream identity: mt19937_64 seeded with splitmix64 mixed from
// (seed, stream_index). Parallel loops draw one stream per work item, so
// results do not depend on the thread count.

namespace tracena::rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seed for sub-stream `index` of a run seeded with `seed`.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t s = seed;
    std::uint64_t a = splitmix64(s);
    s ^= index * 0xda942042e4dd58b5ULL;
    std::uint64_t b = splitmix64(s);
    return a ^ (b + 0x9e3779b97f4a7c15ULL);
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(derive_seed(seed, index));
}

// Uniform index in [0, n). Modulo reduction; the bias for n << 2^64 is far
// below anything observable at our sample sizes.
inline std::size_t uniform_index(std::mt19937_64& g, std::size_t n) {
    return static_cast<std::size_t>(g() % static_cast<std::uint64_t>(n));
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller. One value per call; the sine branch is
// discarded to keep the consumption pattern fixed.
inline double normal(std::mt19937_64& g) {
    double u1 = uniform_unit(g);
    while (u1 <= 0.0) u1 = uniform_unit(g);
    const double u2 = uniform_unit(g);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.28318530717958647692 * u2);
}

inline double normal(std::mt19937_64& g, double mean, double sd) {
    return mean + sd * normal(g);
}

}  // namespace tracena::rng
