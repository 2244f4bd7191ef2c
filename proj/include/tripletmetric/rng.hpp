#pragma once

#include <cmath>
#include <cstdint>

namespace tripletmetric::rng {

// Counter-based pseudo-random generation built on the splitmix64 finalizer.
// Every draw is a pure function of (stream key, counter), so any stage of a
// run can be reproduced in isolation and draws may be evaluated in any order
// (or in parallel) without changing the result.

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

/// splitmix64 output finalizer (Stafford mix13).
inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

/// Value of stream `key` at position `counter`, independent of any state.
inline std::uint64_t at(std::uint64_t key, std::uint64_t counter) {
    return mix64(key + (counter + 1) * kGoldenGamma);
}

/// Stages of a run draw from disjoint streams derived from the user seed.
enum class Stage : std::uint64_t {
    Features = 1,
    Metric = 2,
    Triplets = 3,
    Responses = 4,
    PairSample = 5,
    Shuffle = 6,
};

/// Derives the per-stage stream key from the user-facing seed.
inline std::uint64_t stream_key(std::uint64_t seed, Stage stage) {
    return mix64(seed ^ mix64(static_cast<std::uint64_t>(stage) * kGoldenGamma));
}

/// Uniform double in [0, 1) from 53 random bits.
inline double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Uniform double in (0, 1]; safe as a log() argument.
inline double to_unit_open(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

/// Standard normal deviate for stream position `counter` (Box-Muller,
/// cosine branch; consumes positions 2*counter and 2*counter+1).
inline double normal_at(std::uint64_t key, std::uint64_t counter) {
    const double u1 = to_unit_open(at(key, 2 * counter));
    const double u2 = to_unit(at(key, 2 * counter + 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

/// Bernoulli draw with success probability `p` at stream position `counter`.
inline bool bernoulli_at(std::uint64_t key, std::uint64_t counter, double p) {
    return to_unit(at(key, counter)) < p;
}

/// Small sequential view over a stream, for code that wants generator
/// semantics rather than random access.
class Sequence {
public:
    explicit Sequence(std::uint64_t key) : key_(key) {}

    std::uint64_t next_bits() { return at(key_, counter_++); }
    double next_unit() { return to_unit(next_bits()); }

    /// Uniform integer in [0, bound) by rejection, free of modulo bias.
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t limit = bound * (UINT64_MAX / bound);
        std::uint64_t x = next_bits();
        while (x >= limit) x = next_bits();
        return x % bound;
    }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace tripletmetric::rng
