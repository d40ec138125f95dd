#pragma once

#include <cstdint>
#include <random>

namespace wxgen {

// Seeded random source used everywhere randomness is needed.
//
// The engine is std::mt19937_64 (bit-exact by the standard), but every
// distribution on top of it is implemented here explicitly because the
// std::*_distribution algorithms are implementation-defined and would break
// reproducibility across standard libraries. A seed therefore pins the exact
// value stream on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be positive.
    int64_t uniform_int(int64_t n);

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller; pairs are cached so consecutive calls
    // consume the engine at a fixed, seed-determined rate.
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Gamma(shape, scale) by Marsaglia-Tsang squeeze, with the usual
    // power-of-uniform boost for shape < 1.
    double gamma(double shape, double scale);

    // Count of normal() calls made so far (used to measure rejection rates).
    uint64_t normal_calls() const { return normal_calls_; }

    // Derive an independent generator for a named stream. Streams with
    // different indices are decorrelated by a splitmix64 hash of the seed.
    Rng spawn(uint64_t stream) const;

private:
    uint64_t seed_;
    std::mt19937_64 engine_;
    uint64_t normal_calls_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// splitmix64 finalizer, also used for seed mixing.
uint64_t mix64(uint64_t x);

}  // namespace wxgen
