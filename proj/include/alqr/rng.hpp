#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "alqr/control_math.hpp"

namespace alqr {

[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

[[nodiscard]] constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Independent child seed for a named purpose ("noise", "explore", ...).
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) noexcept {
    return splitmix64(seed ^ splitmix64(fnv1a64(tag)));
}

/// Counter-based generator: draw k of a stream is a pure function of
/// (seed, k), so output never depends on thread scheduling or call history
/// beyond the counter.
class NoiseStream {
public:
    explicit NoiseStream(std::uint64_t seed = 0, std::uint64_t counter = 0) noexcept
        : seed_(seed), counter_(counter) {}

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept { return to_unit(bits(2 * counter_++)); }

    /// Uniform on [lo, hi].
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller on two hashed uniforms.
    double gaussian() noexcept {
        const std::uint64_t k = counter_++;
        const double u1 = to_unit(bits(2 * k));
        const double u2 = to_unit(bits(2 * k + 1));
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    [[nodiscard]] std::uint64_t bits(std::uint64_t k) const noexcept { return splitmix64(seed_ ^ splitmix64(k)); }

    [[nodiscard]] static double to_unit(std::uint64_t b) noexcept {
        // 53 random bits, shifted off zero.
        return (static_cast<double>(b >> 11) + 0.5) * 0x1.0p-53;
    }

    std::uint64_t seed_;
    std::uint64_t counter_;
};

/// n i.i.d. N(0, sigma^2) draws; advances the stream by n.
[[nodiscard]] inline Vec sample_noise(NoiseStream& stream, Eigen::Index n, double sigma) {
    Vec w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        w(i) = sigma * stream.gaussian();
    }
    return w;
}

} // namespace alqr
