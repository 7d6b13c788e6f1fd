#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "actseq/errors.hpp"

namespace actseq {

// Seedable pseudorandom generator with a fixed, documented algorithm so
// that streams are reproducible across platforms and standard libraries.
//
// Core generator: xoshiro256** (Blackman & Vigna), state filled from the
// 64-bit seed by splitmix64. Derived draws:
//   uniform double in [0,1): top 53 bits of next() scaled by 2^-53
//   uniform_int(n):          Lemire's multiply-shift with rejection
//   normal:                  Marsaglia polar method (pairs cached)
//   gamma:                   Marsaglia-Tsang squeeze (shape >= 1; boosted
//                            by u^(1/shape) below 1)
//   poisson:                 Knuth product method, split for large means
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
        have_cached_normal_ = false;
    }

    // Mixes a stream index into a base seed; used to derive independent
    // per-sample generators (documented seeding scheme for parallel use).
    static std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
        std::uint64_t s = base ^ (0x9E3779B97F4A7C15ULL * (index + 1));
        return splitmix64(s);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Unbiased integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw NumericError("uniform_int: n must be positive");
        std::uint64_t x = next_u64();
        unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
        auto l = static_cast<std::uint64_t>(m);
        if (l < n) {
            const std::uint64_t t = (0 - n) % n;
            while (l < t) {
                x = next_u64();
                m = static_cast<unsigned __int128>(x) * n;
                l = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    int index(std::size_t n) { return static_cast<int>(uniform_int(n)); }

    double normal() {
        if (have_cached_normal_) {
            have_cached_normal_ = false;
            return cached_normal_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        cached_normal_ = v * f;
        have_cached_normal_ = true;
        return u * f;
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    double gamma(double shape, double scale) {
        if (shape <= 0.0 || scale <= 0.0) throw NumericError("gamma: shape and scale must be positive");
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        while (true) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
        }
    }

    long poisson(double mean) {
        if (mean < 0.0) throw NumericError("poisson: mean must be non-negative");
        long total = 0;
        while (mean > 256.0) {  // Poisson(a+b) == Poisson(a) + Poisson(b)
            total += poisson_knuth(128.0);
            mean -= 128.0;
        }
        return total + poisson_knuth(mean);
    }

    // Negative binomial with the given mean and dispersion r (variance
    // mean + mean^2 / r), sampled as a gamma-mixed Poisson.
    long negative_binomial(double mean, double dispersion) {
        if (mean <= 0.0) return 0;
        if (dispersion <= 0.0) throw NumericError("negative_binomial: dispersion must be positive");
        return poisson(gamma(dispersion, mean / dispersion));
    }

    // Draws an index from a discrete distribution (weights need not be
    // normalized; all weights must be non-negative with positive total).
    int discrete(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) {
            if (w < 0.0 || !std::isfinite(w)) throw NumericError("discrete: invalid weight");
            total += w;
        }
        if (total <= 0.0) throw NumericError("discrete: weights sum to zero");
        double u = uniform() * total;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            u -= weights[i];
            if (u < 0.0) return static_cast<int>(i);
        }
        return static_cast<int>(weights.size() - 1);
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = uniform_int(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    static std::uint64_t splitmix64(std::uint64_t& state) {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    long poisson_knuth(double mean) {
        const double limit = std::exp(-mean);
        long k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > limit);
        return k - 1;
    }

    std::uint64_t state_[4] = {};
    double cached_normal_ = 0.0;
    bool have_cached_normal_ = false;
};

}  // namespace actseq
