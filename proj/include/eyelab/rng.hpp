#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace eyelab {

// Deterministic, platform-independent pseudo-random generator (SplitMix64).
// Every random decision in the library flows from one root seed through
// named derived streams, so results are reproducible across machines and
// independent of iteration order elsewhere in the program.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) by rejection. n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = -n % n;  // 2^64 mod n
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller. Consumes two uniforms per call; no
    // state is cached so the draw sequence is position-independent.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

  private:
    std::uint64_t state_;
};

// FNV-1a 64-bit hash, used both for stream derivation and for input-file
// digests recorded in run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xCBF29CE484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}
}  // namespace detail

// Derive an independent child seed from (seed, name). Distinct names give
// statistically independent streams regardless of the order they are drawn
// from, which keeps replicate-level work order-independent.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
    return detail::mix64(seed ^ fnv1a64(name));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name, std::uint64_t index) {
    std::uint64_t h = fnv1a64(name);
    h = fnv1a64(&index, sizeof index, h);
    return detail::mix64(seed ^ h);
}

inline Rng rng_stream(std::uint64_t seed, std::string_view name) { return Rng(derive_seed(seed, name)); }

inline Rng rng_stream(std::uint64_t seed, std::string_view name, std::uint64_t index) {
    return Rng(derive_seed(seed, name, index));
}

inline Rng rng_stream(std::uint64_t seed, std::string_view name, std::string_view key) {
    std::uint64_t h = fnv1a64(name);
    h = fnv1a64(key, h);
    return Rng(detail::mix64(seed ^ h));
}

}  // namespace eyelab
