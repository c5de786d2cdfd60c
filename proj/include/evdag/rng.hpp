#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <numeric>
#include <vector>

namespace evdag {

inline constexpr std::uint64_t kRngGamma = 0x9e3779b97f4a7c15ull;

/// Finalizing mixer of SplitMix64 (Steele, Lea & Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Derive an independent stream key from a base seed and a tuple of words.
/// Replicate r of cell (d, q, n) gets derive_key(seed, {d, q, n, r}), so
/// streams do not depend on execution order and adding grid cells never
/// perturbs existing ones.
constexpr std::uint64_t derive_key(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> words) {
    std::uint64_t h = mix64(seed + kRngGamma);
    for (std::uint64_t w : words) {
        h = mix64(h ^ (w + kRngGamma + (h << 6) + (h >> 2)));
    }
    return h;
}

/// Counter-based generator: output i of a stream with key k is
/// mix64(k + (i+1)*gamma), a pure function of (key, i).
class Rng {
  public:
    explicit Rng(std::uint64_t key) : state_(key) {}

    std::uint64_t next_u64() {
        state_ += kRngGamma;
        return mix64(state_);
    }

    /// Uniform on (0, 1]; never zero, so log() is safe.
    double next_u01() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_u01(); }

    double rademacher() { return (next_u64() & 1u) ? 1.0 : -1.0; }

    /// Standard normal via Box-Muller (two uniforms per draw, deterministic).
    double normal() {
        const double u1 = next_u01();
        const double u2 = next_u01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Unbiased integer in [0, n) (Lemire's rejection method).
    std::uint64_t below(std::uint64_t n) {
        std::uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t t = (0 - n) % n;
            while (lo < t) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Fisher-Yates permutation of 0..n-1.
    std::vector<int> permutation(int n) {
        std::vector<int> p(static_cast<std::size_t>(n));
        std::iota(p.begin(), p.end(), 0);
        for (int i = n - 1; i > 0; --i) {
            const auto j = static_cast<int>(below(static_cast<std::uint64_t>(i) + 1));
            std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
        }
        return p;
    }

  private:
    std::uint64_t state_;
};

}  // namespace evdag
