#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace chf {

/// Splitmix64 finalizer; the building block for all seed derivation.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Named random streams hanging off one master seed.
enum class SeedStream : std::uint64_t {
    shuffle = 1,
    members = 2,
    tuner = 3,
    sampling = 4,
    synth = 5,
    train = 6,
    init = 7,
};

/// Derive an independent seed from (master, stream, index) by chained splitmix64.
inline std::uint64_t derive_seed(std::uint64_t master, SeedStream stream,
                                 std::uint64_t index = 0) {
    std::uint64_t s = splitmix64(master ^ (0x9e3779b97f4a7c15ULL *
                                           (static_cast<std::uint64_t>(stream) + 1)));
    return splitmix64(s ^ (0xbf58476d1ce4e5b9ULL * (index + 1)));
}

/// Seeded generator with explicit real-number transforms.
///
/// std::mt19937_64 itself is fully specified by the standard; the
/// distribution adapters are not, so uniform and normal draws are produced
/// here directly to keep results identical across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n) by rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % n;
    }

    /// Standard normal via Box-Muller; second value cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Fisher-Yates permutation of 0..n-1 drawn from an existing generator.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

/// Fisher-Yates permutation of 0..n-1 from a seed.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    return shuffled_indices(n, rng);
}

}  // namespace chf
