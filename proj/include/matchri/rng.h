#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace matchri::rng {

// All draws go through these helpers instead of <random> distributions, whose
// algorithms are implementation-defined; std::mt19937_64 itself is fully
// specified, so streams are reproducible across standard libraries.
using Engine = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed of an independent stream `index` derived from `master`.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) ^ splitmix64(index + 0xA0761D6478BD642FULL));
}

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Engine& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

/// Uniform integer on [0, n), n >= 1, without modulo bias.
inline std::uint64_t bounded(Engine& g, std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t r = g();
        if (r >= threshold) return r % n;
    }
}

// Marsaglia polar method; caches the second variate.
class NormalSampler {
  public:
    double operator()(Engine& g) {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01(g) - 1.0;
            v = 2.0 * uniform01(g) - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

  private:
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace matchri::rng
