#ifndef CACGEN_RNG_HPP
#define CACGEN_RNG_HPP

#include <cmath>
#include <cstdint>

namespace cacgen {

// splitmix64; used everywhere instead of std distributions so streams are
// identical across platforms and standard-library versions.
inline uint64_t splitmix64_next(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    splitmix64_next(s);
    return s;
}

struct Rng {
    uint64_t state = 0;

    explicit Rng(uint64_t seed) : state(seed) {}

    uint64_t next_u64() { return splitmix64_next(state); }

    // uniform in [0, 1), 53-bit mantissa
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // zero-mean unit-variance uniform; avoids libm so token embeddings are
    // bit-identical everywhere
    double unit_variance_uniform() {
        static const double r = std::sqrt(3.0);
        return uniform(-r, r);
    }

    // Box-Muller
    double normal() {
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }
};

}  // namespace cacgen

#endif
