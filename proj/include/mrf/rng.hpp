#ifndef MRF_RNG_HPP
#define MRF_RNG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mrf {

// All randomness in the library flows through mt19937_64 streams derived
// deterministically from (seed, stream id, tag). Distribution sampling is
// hand-rolled on top of the raw engine so that results depend only on the
// engine state, never on the standard library's <random> distributions.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Independent RNG stream for (seed, id, tag). Streams with distinct ids or
/// tags are decorrelated, so per-tree work is schedule-independent.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t id, std::uint64_t tag = 0) {
    std::uint64_t s = splitmix64(seed ^ splitmix64(id ^ splitmix64(tag)));
    return std::mt19937_64(s);
}

// Stream tags used across the library.
namespace stream_tag {
constexpr std::uint64_t bag = 0x626167;
constexpr std::uint64_t split = 0x73706c69;
constexpr std::uint64_t weights = 0x77656967;
}  // namespace stream_tag

/// Uniform integer in [0, n) by rejection; n must be > 0.
inline std::uint64_t rand_below(std::mt19937_64& rng, std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("rand_below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r = rng();
    while (r >= limit) r = rng();
    return r % n;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double rand_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double in [a, b).
inline double rand_uniform(std::mt19937_64& rng, double a, double b) {
    return a + (b - a) * rand_unit(rng);
}

/// Standard normal draw (Box-Muller, pairs consumed eagerly, no cache so the
/// consumption pattern is two uniforms per call).
inline double rand_normal(std::mt19937_64& rng) {
    double u1 = rand_unit(rng);
    while (u1 <= 0.0) u1 = rand_unit(rng);
    const double u2 = rand_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

/// Exp(1) draw.
inline double rand_exp(std::mt19937_64& rng) {
    double u = rand_unit(rng);
    while (u <= 0.0) u = rand_unit(rng);
    return -std::log(u);
}

/// k distinct indices drawn uniformly from {0..n-1} (partial Fisher-Yates),
/// returned in draw order.
inline std::vector<int> sample_without_replacement(std::mt19937_64& rng, int n, int k) {
    if (k < 0 || k > n) throw std::invalid_argument("sample_without_replacement: need 0 <= k <= n");
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    std::vector<int> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(rand_below(rng, static_cast<std::uint64_t>(n - i)));
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
    return out;
}

/// Weighted sampling without replacement (Efraimidis-Spirakis): k distinct
/// indices with inclusion probability increasing in weight. Weights must be
/// positive. Used for the mtry draw when the trend column is up-weighted.
inline std::vector<int> weighted_sample_without_replacement(std::mt19937_64& rng,
                                                            const std::vector<double>& weights,
                                                            int k) {
    const int n = static_cast<int>(weights.size());
    if (k < 0 || k > n) throw std::invalid_argument("weighted_sample_without_replacement: need 0 <= k <= n");
    std::vector<std::pair<double, int>> keys(n);
    for (int i = 0; i < n; ++i) {
        if (!(weights[i] > 0.0)) throw std::invalid_argument("weighted_sample_without_replacement: weights must be positive");
        double u = rand_unit(rng);
        while (u <= 0.0) u = rand_unit(rng);
        keys[i] = {std::log(u) / weights[i], i};
    }
    std::partial_sort(keys.begin(), keys.begin() + k, keys.end(),
                      [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });
    std::vector<int> out(k);
    for (int i = 0; i < k; ++i) out[i] = keys[i].second;
    return out;
}

/// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle_in_place(std::mt19937_64& rng, std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
        const int j = static_cast<int>(rand_below(rng, static_cast<std::uint64_t>(i + 1)));
        std::swap(v[i], v[j]);
    }
}

}  // namespace mrf

#endif  // MRF_RNG_HPP
