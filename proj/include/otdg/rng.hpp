#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace otdg {

// splitmix64 step; the standard constant mix used for seed expansion.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derive an independent stream seed from a base seed and a purpose tag, so
// e.g. the split RNG and the init RNG of one run never share state.
inline uint64_t derive_seed(uint64_t base, std::string_view tag) {
    uint64_t h = base ^ 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
        h *= 0x100000001b3ULL;
    }
    return splitmix64(h);
}

inline std::mt19937_64 make_rng(uint64_t seed) { return std::mt19937_64(seed); }

// Uniform in [0,1). 53-bit resolution, engine-only (no distribution state).
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller without caching the spare value, so draws
// are a pure function of the engine state.
inline double std_normal(std::mt19937_64& rng) {
    double u1 = 0.0;
    do {
        u1 = uniform01(rng);
    } while (u1 <= 0.0);
    double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

inline int uniform_int(std::mt19937_64& rng, int n) {
    // rejection sampling keeps the draw unbiased
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return static_cast<int>(x % un);
}

}  // namespace otdg
