#pragma once

// Deterministic random number generation. All randomness in the pipeline
// flows through Rng so that a (seed, call sequence) pair reproduces the
// same stream on every platform. Standard-library distributions are
// avoided on purpose: their output is implementation-defined.

#include <cmath>
#include <cstdint>

namespace segda {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ULL) {
        // warm up so nearby seeds decorrelate
        next_u64();
        next_u64();
    }

    // splitmix64
    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform integer in [0, n), n >= 1
    std::uint64_t next_below(std::uint64_t n) {
        // rejection sampling to kill modulo bias
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // uniform double in [0, 1)
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // standard normal via Box-Muller; one value per call, no caching,
    // so the stream position is a pure function of the call count
    double next_normal() {
        double u1 = next_unit();
        double u2 = next_unit();
        while (u1 <= 0.0) u1 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // derive an independent stream for (this stream, salt); does not
    // advance the parent, distinct salts give decorrelated children
    Rng split(std::uint64_t salt) const {
        return Rng(state_ ^ (salt * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
    }

private:
    std::uint64_t state_;
};

} // namespace segda
