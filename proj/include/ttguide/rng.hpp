#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace ttguide {

/// SplitMix64 (Steele, Lea & Flood 2014), seeded directly with the user seed.
///
/// Every random draw in the library goes through this generator so results are
/// bit-reproducible across platforms and languages:
///
///   state += 0x9E3779B97F4A7C15
///   z = state
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
///
/// Uniforms take the top 53 bits: u = (next() >> 11) * 2^-53, u in [0, 1).
/// Normals use the basic Box-Muller transform on consecutive uniform pairs
/// (u1, u2): r = sqrt(-2 ln(1 - u1)), returning r cos(2 pi u2) first and caching
/// r sin(2 pi u2) for the following call.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Uniform integer in [0, bound) by rejection; bound must be positive.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x = next();
        while (x >= limit) x = next();
        return x % bound;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Mixes a user seed with a stream tag so independent consumers (adapter init,
/// latent draw, shuffling) never share a stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    SplitMix64 mix(seed ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
    return mix.next();
}

} // namespace ttguide
