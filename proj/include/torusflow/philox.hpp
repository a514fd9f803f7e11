// Philox4x32-10 counter-based generator (Salmon et al., SC 2011) plus the
// coordinate-keyed draws used throughout the simulators.
//
// Every random number in a run is a pure function of
// (seed, stream, replica, mode, step), so results are bit-identical no
// matter how work is partitioned across threads.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace torusflow {

namespace detail {

inline void philox_mulhilo(std::uint32_t a, std::uint32_t b,
                           std::uint32_t& hi, std::uint32_t& lo) {
    std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace detail

struct Philox4x32 {
    static constexpr std::uint32_t kMult0 = 0xD2511F53u;
    static constexpr std::uint32_t kMult1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            std::uint32_t hi0, lo0, hi1, lo1;
            detail::philox_mulhilo(kMult0, ctr[0], hi0, lo0);
            detail::philox_mulhilo(kMult1, ctr[2], hi1, lo1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }
};

/// Independent streams drawn from one 64-bit seed.
enum class RngStream : std::uint32_t {
    kNoise = 1,         // Brownian increments
    kCoin = 2,          // per-replica coin flips (mixture probe)
    kSigns = 3,         // rough-drift sign pattern
    kPerturbation = 4,  // optimizer perturbations
    kScatter = 5,       // random points / test-function coefficients
};

namespace detail {

inline std::array<std::uint32_t, 4> keyed_block(std::uint64_t seed, RngStream stream,
                                                std::uint32_t replica, std::uint32_t mode,
                                                std::uint32_t step) {
    std::array<std::uint32_t, 4> ctr = {step, mode, replica,
                                        static_cast<std::uint32_t>(stream)};
    std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                        static_cast<std::uint32_t>(seed >> 32)};
    return Philox4x32::block(ctr, key);
}

/// 53-bit uniform in (0, 1] from two 32-bit words (never 0, safe for log).
inline double uniform_open(std::uint32_t w0, std::uint32_t w1) {
    std::uint64_t mant = (static_cast<std::uint64_t>(w0 >> 6) << 27) | (w1 >> 5);
    return (static_cast<double>(mant) + 1.0) * 0x1p-53;
}

}  // namespace detail

/// Standard normal draw keyed by coordinates (Box-Muller, cosine branch).
inline double counter_normal(std::uint64_t seed, RngStream stream, std::uint32_t replica,
                             std::uint32_t mode, std::uint32_t step) {
    auto w = detail::keyed_block(seed, stream, replica, mode, step);
    double u1 = detail::uniform_open(w[0], w[1]);
    double u2 = detail::uniform_open(w[2], w[3]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Uniform draw in [0, 1) keyed by coordinates.
inline double counter_uniform(std::uint64_t seed, RngStream stream, std::uint32_t replica,
                              std::uint32_t mode, std::uint32_t step) {
    auto w = detail::keyed_block(seed, stream, replica, mode, step);
    return detail::uniform_open(w[0], w[1]) - 0x1p-53;
}

/// Deterministic +/-1 sign.
inline double counter_sign(std::uint64_t seed, RngStream stream, std::uint32_t replica,
                           std::uint32_t mode, std::uint32_t step) {
    auto w = detail::keyed_block(seed, stream, replica, mode, step);
    return (w[0] & 1u) ? 1.0 : -1.0;
}

}  // namespace torusflow
