#pragma once

#include <cstdint>
#include <random>

namespace mage {

/// Seeded random source with platform-independent draws.
///
/// Only the raw 64-bit engine output is used; uniform reals and bounded
/// integers are derived here instead of through <random> distributions,
/// whose algorithms differ across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Independent stream `index` derived from `master` (splitmix64 mix).
    static Rng stream(std::uint64_t master, std::uint64_t index);

    std::uint64_t next() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

} // namespace mage
