#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace gsgan {

// Counter-based deterministic RNG (SplitMix64 core). The entire stream is a
// pure function of (seed, number of draws), so the state serializes as two
// 64-bit integers and restores bit-exactly.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed = 0) : seed_(seed), counter_(0) {}

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ULL * ++counter_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller. One draw consumes two uniforms and
    // keeps no cached partner, so the state stays a plain counter.
    double normal() {
        double u1 = uniform01();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = uniform01();
        const double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    // Bounded draw in [0, n). Modulo bias is irrelevant at our n and keeps
    // the draw count per call fixed at one.
    std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

    // Fisher-Yates permutation of {0..n-1}.
    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        std::iota(p.begin(), p.end(), std::size_t{0});
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

// Independent substream: hash-combines a parent seed with a stream tag so
// that e.g. latent sampling and data shuffling never share draws.
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed ^ (0x9E3779B97F4A7C15ULL + (tag << 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace gsgan
