#ifndef LWAT_RNG_HPP
#define LWAT_RNG_HPP

#include <cmath>
#include <cstdint>

namespace lwat {

// splitmix64 finalizer; the basis for both the sequential and the
// counter-based generators so results do not depend on the platform's
// std::*_distribution implementations.
inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Stateless: the value at a counter position is a pure function of
// (key, counter). Used where the draw order must not depend on how much
// randomness other components consumed (epoch shuffles, flip decisions).
inline uint64_t counter_hash(uint64_t key, uint64_t counter) {
    return mix64(mix64(key) ^ (counter * 0xd6e8feb86659fd93ULL + 0x2545f4914f6cdd1dULL));
}

// Sequential deterministic stream.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(mix64(seed ^ 0x6a09e667f3bcc908ULL)) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) by rejection.
    uint64_t below(uint64_t n) {
        if (n <= 1) return 0;
        const uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n);
        uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    // Standard normal via Box-Muller; caches the second deviate.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace lwat

#endif // LWAT_RNG_HPP
