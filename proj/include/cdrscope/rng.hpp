#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace cdrscope {

// Deterministic, platform-independent RNG. std::<distribution> output is
// implementation-defined, so all sampling used for reproducible artifacts
// goes through this class instead.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        // SplitMix64 expansion of the seed into xoshiro256++ state.
        uint64_t x = seed;
        for (auto& w : state_) {
            x += 0x9e3779b97f4a7c15ULL;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            w = z ^ (z >> 31);
        }
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    uint64_t bounded(uint64_t n) {
        if (n <= 1) return 0;
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive bounds
        return lo + static_cast<int64_t>(bounded(static_cast<uint64_t>(hi - lo + 1)));
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Marsaglia polar method; no state carried between calls so that the
    // consumption pattern stays easy to reason about.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        return mean + stddev * u * std::sqrt(-2.0 * std::log(s) / s);
    }

    double lognormal(double mu, double sigma) { return std::exp(normal(mu, sigma)); }

    double exponential(double rate) { return -std::log(1.0 - uniform01()) / rate; }

    // Knuth below, normal approximation for large means (counts only).
    uint64_t poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        if (lambda < 48.0) {
            const double l = std::exp(-lambda);
            uint64_t k = 0;
            double p = 1.0;
            do {
                ++k;
                p *= uniform01();
            } while (p > l);
            return k - 1;
        }
        double g = std::round(normal(lambda, std::sqrt(lambda)));
        return g < 0.0 ? 0 : static_cast<uint64_t>(g);
    }

    // Independent child stream: identical (seed, key) pairs give identical
    // streams regardless of what was drawn from the parent.
    static Rng derive(uint64_t seed, uint64_t key_a, uint64_t key_b = 0) {
        uint64_t h = 0xcbf29ce484222325ULL;
        for (uint64_t v : {seed, key_a, key_b}) {
            for (int i = 0; i < 8; ++i) {
                h ^= (v >> (8 * i)) & 0xff;
                h *= 0x100000001b3ULL;
            }
        }
        return Rng(h);
    }

    // Fisher-Yates.
    template <typename V>
    void shuffle(V& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t state_[4];
};

}  // namespace cdrscope
