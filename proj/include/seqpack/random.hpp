#pragma once

// Portable seeded shuffling. std::shuffle and the standard distributions are
// implementation-defined, so outputs would differ between standard libraries.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace seqpack {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent streams for the different shuffles of one run.
enum class SeedStream : std::uint64_t {
    corpus_order = 1,
    batch_order = 2,
    synthetic = 3,
};

inline std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream)
{
    return splitmix64(seed ^ (static_cast<std::uint64_t>(stream) * 0xd1b54a32d192ed03ULL));
}

// Unbiased integer in [0, bound) by rejection.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound)
{
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v;
    do {
        v = rng();
    } while (v >= limit);
    return v % bound;
}

template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

inline std::vector<std::size_t> identity_permutation(std::size_t n)
{
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    return p;
}

inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed)
{
    auto p = identity_permutation(n);
    seeded_shuffle(p, seed);
    return p;
}

inline double uniform_unit(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller; one draw per call.
inline double standard_normal(std::mt19937_64& rng)
{
    double u1 = uniform_unit(rng);
    while (u1 <= 0.0) u1 = uniform_unit(rng);
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

/// Long-tailed conversation lengths: log-normal around `median`, clamped to
/// [min_length, max_length].
inline std::vector<std::size_t> lognormal_lengths(std::size_t count, double median, double sigma, std::size_t min_length,
                                                  std::size_t max_length, std::uint64_t seed)
{
    std::mt19937_64 rng(derive_seed(seed, SeedStream::synthetic));
    std::vector<std::size_t> out;
    out.reserve(count);
    const double mu = std::log(median);
    for (std::size_t i = 0; i < count; ++i) {
        const double v = std::round(std::exp(mu + sigma * standard_normal(rng)));
        const double clamped = std::min(std::max(v, static_cast<double>(min_length)), static_cast<double>(max_length));
        out.push_back(static_cast<std::size_t>(clamped));
    }
    return out;
}

} // namespace seqpack
