#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace edsc {

// Deterministic RNG used everywhere instead of std distributions, whose
// outputs differ across standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed), state_hash_(seed ^ 0x6a09e667f3bcc908ULL) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0,1) with 53 random bits.
    double uniform() { return std::ldexp(static_cast<double>(eng_() >> 11), -53); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive on both ends. Modulo bias is irrelevant for the small ranges
    // used here (pixel positions, dataset indices).
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(eng_() % static_cast<uint64_t>(hi - lo + 1));
    }

    // Standard normal via Box-Muller. No caching of the second value so the
    // stream position is a pure function of the call count.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Derive an independent child stream, e.g. one per parameter tensor, so
    // adding a draw in one place does not shift every later stream.
    Rng fork(uint64_t stream) const {
        uint64_t x = state_hash_ ^ (stream + 0x9e3779b97f4a7c15ULL);
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        x = x ^ (x >> 31);
        Rng child(x);
        child.state_hash_ = x;
        return child;
    }

private:
    std::mt19937_64 eng_;
    uint64_t state_hash_;
};

}  // namespace edsc
