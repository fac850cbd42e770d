#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "glim/common.hpp"

namespace glim::rng {

using Engine = std::mt19937_64;

// Draws kept free of std::*_distribution so results are identical across
// standard libraries, not just across runs of one build.

inline uint64_t next_u64(Engine& g) { return g(); }

// Uniform integer in [lo, hi], rejection-free Lemire-style reduction.
inline int64_t uniform_int(Engine& g, int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(g());  // full 64-bit range
    uint64_t x = g();
    __uint128_t m = static_cast<__uint128_t>(x) * span;
    uint64_t l = static_cast<uint64_t>(m);
    if (l < span) {
        const uint64_t t = (0 - span) % span;
        while (l < t) {
            x = g();
            m = static_cast<__uint128_t>(x) * span;
            l = static_cast<uint64_t>(m);
        }
    }
    return lo + static_cast<int64_t>(m >> 64);
}

// Uniform real in [0, 1) with 53-bit resolution.
inline double uniform_real(Engine& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Uniform real in [lo, hi).
inline double uniform_real(Engine& g, double lo, double hi) {
    return lo + (hi - lo) * uniform_real(g);
}

// Derive an independent stream from a base seed and a stream tag.
inline Engine stream(uint64_t seed, uint64_t tag) {
    std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                      static_cast<uint32_t>(tag), static_cast<uint32_t>(tag >> 32),
                      0x9e3779b9u};
    return Engine(seq);
}

// mt19937_64 state round-trips through its text representation.
std::string save_state(const Engine& g);
Engine load_state(const std::string& text);

}  // namespace glim::rng
