#pragma once

#include <cmath>
#include <cstdint>

namespace stomax {

/**
 * @brief Philox4x32-10 counter-based random bit generator.
 *
 * Stateless: every 128-bit output is a pure function of a 128-bit counter
 * and a 64-bit key, so any (seed, sample, mode, step) tuple can be replayed
 * bit-identically from any thread in any order.
 */
struct Philox4x32 {
    std::uint32_t c0, c1, c2, c3;  // counter words
    std::uint32_t k0, k1;          // key words

    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    struct Output {
        std::uint32_t x0, x1, x2, x3;
    };

    static Output generate(std::uint64_t key, std::uint32_t c0, std::uint32_t c1,
                           std::uint32_t c2, std::uint32_t c3) {
        std::uint32_t k0 = static_cast<std::uint32_t>(key);
        std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c0;
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c2;
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            const std::uint32_t n0 = hi1 ^ c1 ^ k0;
            const std::uint32_t n1 = lo1;
            const std::uint32_t n2 = hi0 ^ c3 ^ k1;
            const std::uint32_t n3 = lo0;
            c0 = n0;
            c1 = n1;
            c2 = n2;
            c3 = n3;
            k0 += kWeyl0;
            k1 += kWeyl1;
        }
        return Output{c0, c1, c2, c3};
    }
};

/// Stream tags separating independent uses of the same master seed.
enum class RngPurpose : std::uint32_t {
    PathIncrement = 0,
    InitialH1 = 1,
    InitialH2 = 2,
    TestState = 3,
};

/// Map 64 random bits to a double in the open interval (0, 1).
inline double bits_to_open_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return static_cast<double>(bits >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

/// Map 64 random bits to a double in the half-open interval [0, 1).
inline double bits_to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/**
 * @brief Standard normal draw for a (seed, sample, mode, step) tuple.
 *
 * Box-Muller on the two 64-bit halves of one Philox block; only the cosine
 * branch is used so each tuple maps to exactly one variate.
 */
inline double normal_draw(std::uint64_t seed, std::uint32_t sample, std::uint32_t mode,
                          std::uint32_t step, RngPurpose purpose = RngPurpose::PathIncrement) {
    const auto out = Philox4x32::generate(seed, step, mode, sample,
                                          static_cast<std::uint32_t>(purpose));
    const double u1 = bits_to_open_unit(out.x0, out.x1);
    const double u2 = bits_to_unit(out.x2, out.x3);
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

/// Uniform [0,1) draw for a (seed, index) pair on a tagged stream.
inline double uniform_draw(std::uint64_t seed, std::uint32_t index, RngPurpose purpose) {
    const auto out = Philox4x32::generate(seed, index, 0u, 0u,
                                          static_cast<std::uint32_t>(purpose));
    return bits_to_unit(out.x0, out.x1);
}

}  // namespace stomax
