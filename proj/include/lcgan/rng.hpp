#ifndef LCGAN_RNG_HPP
#define LCGAN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace lcgan {

// Deterministic RNG. mt19937_64 is fully specified by the standard; the
// distributions below are hand-rolled because std::uniform_real_distribution
// and friends are implementation-defined and would break bit-reproducibility
// across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit mantissa.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection sampling, unbiased.
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) return 0;
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller; the second draw is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Independent child stream keyed on (this rng's seed, key). Used for
    // per-patient / per-sample / per-stage streams so that stages can be
    // skipped or parallelized without desynchronizing the rest.
    Rng child(uint64_t key) const { return Rng(mix(seed_ ^ mix(key + 0x9e3779b97f4a7c15ULL))); }

    Rng child(uint64_t key1, uint64_t key2) const { return child(key1).child(key2); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // splitmix64 finalizer; good avalanche for seed derivation.
    static uint64_t mix(uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // Stable string hash (FNV-1a) for deriving stage seeds from names.
    static uint64_t hash_str(const char* s) {
        uint64_t h = 1469598103934665603ULL;
        for (; *s; ++s) h = (h ^ static_cast<uint8_t>(*s)) * 1099511628211ULL;
        return h;
    }

private:
    uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace lcgan

#endif
