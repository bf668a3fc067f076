#pragma once

// Portable random draws. std::uniform_real_distribution and
// std::normal_distribution are implementation-defined, so the engine converts
// raw mt19937_64 output itself to keep seeded runs reproducible across
// standard libraries.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>

namespace dsdtex {

using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Box-Muller, two normals per pair of uniforms; no state is cached between calls.
inline void fill_standard_normal(Rng& rng, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); i += 2) {
        double u1 = 1.0 - uniform01(rng);
        double u2 = uniform01(rng);
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * std::numbers::pi * u2;
        out[i] = radius * std::cos(angle);
        if (i + 1 < out.size()) out[i + 1] = radius * std::sin(angle);
    }
}

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& state);

}  // namespace dsdtex
