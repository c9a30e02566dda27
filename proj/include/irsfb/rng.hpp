#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "core.hpp"

namespace irsfb {

// Seeded random streams. Every consumer gets its own named substream so that
// adding draws in one place never shifts the sequence seen by another.
//
// Substream seed = splitmix64(splitmix64(master ^ fnv1a(name)) + index).

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view name,
                                           std::uint64_t index = 0) {
    return splitmix64(splitmix64(master ^ fnv1a(name)) + index);
}

/// A single random stream with the handful of distributions the simulator
/// needs. Uniform and normal draws are built directly on the engine output so
/// sequences do not depend on the standard library's distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static Rng substream(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
        return Rng(derive_seed(master, name, index));
    }

    /// Uniform in [0, 1) with 53 random bits.
    double canonical() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * canonical(); }

    /// Standard normal via Box-Muller (one value per call, no caching so the
    /// stream position is a pure function of the call count).
    double normal() {
        double u1 = canonical();
        while (u1 <= 0.0)
            u1 = canonical();
        const double u2 = canonical();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    /// Circularly-symmetric complex Gaussian with unit variance.
    Complex complex_normal() {
        constexpr double s = 0.70710678118654752440;
        const double re = normal();
        const double im = normal();
        return {s * re, s * im};
    }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(canonical() * static_cast<double>(n)); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace irsfb
