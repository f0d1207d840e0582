#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "delight/common.hpp"

namespace delight {

// Deterministic RNG with a stable bit-level contract. std::uniform_*_distribution
// is implementation-defined, so sampling is done by hand here; the same seed
// yields the same stream on every platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed + 0x9e3779b97f4a7c15ull) {}

    // Derive an independent stream for (seed, id), e.g. per capture or sample.
    static Rng stream(std::uint64_t seed, const std::string& id) {
        return Rng(fnv1a(id, seed ^ 0x51f0e9a3c2b4d876ull));
    }

    static Rng stream(std::uint64_t seed, std::uint64_t id) {
        std::uint64_t mixed[2] = {seed, id};
        return Rng(fnv1a(mixed, sizeof(mixed)));
    }

    std::uint64_t next_u64() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        require(lo <= hi, "uniform_int: empty range");
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; consumes two uniforms per pair, caches the second.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace delight
