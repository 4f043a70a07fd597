#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

namespace hardmine::detail {

// splitmix64: small, fast, and identical on every platform, so seeded runs
// reproduce byte-for-byte regardless of compiler or standard library.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform integer in [0, n); n must be > 0
    std::uint64_t next_below(std::uint64_t n) { return next() % n; }

    // uniform double in [0, 1)
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }
};

// deterministic seed derivation for sub-streams (per scene, per SGD step, ...)
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    SplitMix64 rng(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
    return rng.next();
}

// first k entries of a seeded permutation of [0, n); partial Fisher-Yates
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                           SplitMix64& rng) {
    if (k > n) k = n;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

inline void shuffle(std::vector<std::size_t>& v, SplitMix64& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng.next_below(i)]);
}

}  // namespace hardmine::detail
