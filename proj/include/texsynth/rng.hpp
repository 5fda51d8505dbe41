#pragma once

// Deterministic randomness. One master 64-bit seed controls every random
// choice in a run; independent consumers (patch sampling, filter init, noise
// init, ...) pull sub-streams by fixed index so adding a consumer never
// shifts another one's draws.
//
// Construction: sub-stream k of seed s is an mt19937_64 engine seeded with
// splitmix64(s + k * 0x9E3779B97F4A7C15). mt19937_64 is fully specified by
// the C++ standard and splitmix64 is the reference seeding mix, so streams
// are reproducible across platforms and standard libraries. Floating-point
// draws use the 53-bit mantissa method directly on engine output rather
// than std::uniform_real_distribution, whose draw sequence is
// implementation-defined.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace texsynth {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Fixed sub-stream indices. CLI --seed reaches every consumer through these.
namespace streams {
constexpr std::uint64_t patch_sampling = 1;
constexpr std::uint64_t filter_init = 2;
constexpr std::uint64_t noise_init = 3;
constexpr std::uint64_t kmeans = 4;
constexpr std::uint64_t evaluation = 5;
}  // namespace streams

class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }

    // Independent sub-stream; deterministic function of (seed, index).
    Rng stream(std::uint64_t index) const {
        return Rng(splitmix64(seed_ + index * 0x9E3779B97F4A7C15ULL));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0,1) with 53 random mantissa bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // Uniform on {0, ..., n-1} by rejection (no modulo bias).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0)
            throw std::invalid_argument("Rng::below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Uniform integer on [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        if (hi < lo)
            throw std::invalid_argument("Rng::uniform_int: empty range");
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi) - lo + 1));
    }

    // Standard normal via Box-Muller (deterministic, caches the spare).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace texsynth
