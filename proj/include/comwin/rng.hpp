#pragma once

#include <cmath>
#include <cstdint>

namespace comwin {

/// splitmix64 mixing step. Used both as a seed hash and as the generator core,
/// so every random draw in the project is a pure function of the master seed.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derive a child seed from (seed, tag). Tag values are stable per stream, so
/// independent streams never share draws regardless of consumption order.
inline uint64_t derive_seed(uint64_t seed, uint64_t tag) {
    uint64_t s = seed;
    uint64_t a = splitmix64(s);
    s = a ^ (tag * 0xd6e8feb86659fd93ULL + 0x2545f4914f6cdd1dULL);
    return splitmix64(s);
}

/// Deterministic generator with explicit distributions (no reliance on
/// implementation-defined std:: distribution algorithms).
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Unbiased via rejection.
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) return 0;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    /// Integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(uniform_int(static_cast<uint64_t>(hi - lo + 1)));
    }

    bool coin() { return (next_u64() & 1ULL) != 0; }

    /// Standard normal via Box-Muller; caches the spare value.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Fisher-Yates shuffle.
    template <typename Vec>
    void shuffle(Vec& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(static_cast<uint64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Named substreams of a run's master seed. Keeping the streams separate means
/// consuming draws in one stream never shifts another (e.g. the labeled batch
/// trajectory is identical whether or not unlabeled data is present).
enum class Stream : uint64_t {
    synth_sample = 1,   // + sample index
    synth_split = 2,
    model_init = 3,     // + model index
    sampler_labeled = 4,
    sampler_unlabeled = 5,
    aug_labeled = 6,
    aug_unlabeled = 7,
};

inline Rng stream_rng(uint64_t master_seed, Stream stream, uint64_t index = 0) {
    return Rng(derive_seed(derive_seed(master_seed, static_cast<uint64_t>(stream)), index));
}

}  // namespace comwin
