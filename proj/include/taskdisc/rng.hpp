#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace taskdisc {

// PCG XSL-RR 128/64 ("pcg64"). Hand-rolled rather than <random> because the
// task constructors promise identical label streams for a given seed across
// platforms, and the standard distributions are implementation-defined.
//
// Seeding: state = 0, inc = (stream << 1) | 1, advance, state += seed,
// advance. Each next() advances first and derives the output from the
// pre-advance state (xor-shift-low, random rotate).
class Pcg64 {
  public:
    explicit Pcg64(uint64_t seed, uint64_t stream = 0) {
        state_ = 0;
        inc_ = ((u128(stream) << 1u) | 1u);
        next();
        state_ += seed;
        next();
    }

    uint64_t next() {
        const u128 old = state_;
        state_ = old * kMult + inc_;
        const uint64_t xored = static_cast<uint64_t>(old >> 64) ^ static_cast<uint64_t>(old);
        const unsigned rot = static_cast<unsigned>(old >> 122);
        return (xored >> rot) | (xored << ((-rot) & 63u));
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) via Lemire's multiply-shift rejection.
    uint64_t bounded(uint64_t n) {
        u128 m = u128(next()) * n;
        auto lo = static_cast<uint64_t>(m);
        if (lo < n) {
            const uint64_t t = (-n) % n;
            while (lo < t) {
                m = u128(next()) * n;
                lo = static_cast<uint64_t>(m);
            }
        }
        return static_cast<uint64_t>(m >> 64);
    }

    // Box-Muller with a cached spare; fully determined by the uniform stream.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u = 1.0 - uniform();  // keep log() away from 0
        const double r = std::sqrt(-2.0 * std::log(u));
        const double theta = 6.283185307179586477 * uniform();
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    using u128 = unsigned __int128;
    static constexpr u128 kMult = (u128(0x2360ed051fc65da4ULL) << 64) | 0x4385df649fccf645ULL;

    u128 state_ = 0;
    u128 inc_ = 1;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : s) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Labeled seed fan-out: seed = mix(master, label[, index]). Adding a new
// label never perturbs the streams of existing labels.
inline uint64_t derive_seed(uint64_t master, std::string_view label, uint64_t index = 0) {
    uint64_t h = splitmix64(master ^ fnv1a64(label));
    if (index != 0) h = splitmix64(h ^ splitmix64(index));
    return h;
}

}  // namespace taskdisc
