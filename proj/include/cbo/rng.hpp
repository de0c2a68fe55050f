#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace cbo {

namespace detail {

// Philox 4x32-10 block cipher (Salmon et al., "Parallel random numbers: as
// easy as 1, 2, 3", SC 2011). Counter-based: every (key, counter) pair maps
// to an independent 128-bit block, so streams can be indexed rather than
// advanced.
inline void philox_round(std::array<std::uint32_t, 4>& ctr,
                         const std::array<std::uint32_t, 2>& key) {
    const std::uint64_t prod0 = 0xD2511F53ull * ctr[0];
    const std::uint64_t prod1 = 0xCD9E8D57ull * ctr[2];
    const auto lo0 = static_cast<std::uint32_t>(prod0);
    const auto hi0 = static_cast<std::uint32_t>(prod0 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(prod1);
    const auto hi1 = static_cast<std::uint32_t>(prod1 >> 32);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

inline std::array<std::uint32_t, 4> philox4x32_10(
    std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += 0x9E3779B9u;
            key[1] += 0xBB67AE85u;
        }
        philox_round(ctr, key);
    }
    return ctr;
}

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

} // namespace detail

// Distinct stream purposes, so draws for e.g. initial sampling never collide
// with dynamics noise under the same user seed.
namespace rng_tag {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t noise = 2;
inline constexpr std::uint64_t validation = 3;
inline constexpr std::uint64_t subsample = 4;
} // namespace rng_tag

// Derives an independent 64-bit key from a user seed and a purpose tag.
inline std::uint64_t derive_key(std::uint64_t seed, std::uint64_t tag) {
    return detail::splitmix64(seed ^ detail::splitmix64(tag));
}

// One 128-bit block addressed by (key, stream, step, draw). `stream` is a
// particle or sample index, `step` a time-grid index, `draw` a block index
// within the step.
inline std::array<std::uint32_t, 4> random_block(std::uint64_t key,
                                                 std::uint64_t stream,
                                                 std::uint32_t step,
                                                 std::uint32_t draw) {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(stream),
        static_cast<std::uint32_t>(stream >> 32), step, draw};
    const std::array<std::uint32_t, 2> k = {
        static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
    return detail::philox4x32_10(ctr, k);
}

// Two uniforms from one block: first in (0,1], second in [0,1).
inline std::pair<double, double> uniform_pair(std::uint64_t key,
                                              std::uint64_t stream,
                                              std::uint32_t step,
                                              std::uint32_t draw) {
    const auto block = random_block(key, stream, step, draw);
    const std::uint64_t a =
        (static_cast<std::uint64_t>(block[1]) << 32) | block[0];
    const std::uint64_t b =
        (static_cast<std::uint64_t>(block[3]) << 32) | block[2];
    const double u1 = static_cast<double>((a >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
    return {u1, u2};
}

// Two independent standard normals per block, via Box-Muller. No rejection,
// so the block consumption per draw index is static.
inline std::pair<double, double> normal_pair(std::uint64_t key,
                                             std::uint64_t stream,
                                             std::uint32_t step,
                                             std::uint32_t draw) {
    const auto [u1, u2] = uniform_pair(key, stream, step, draw);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
}

// Fills out[0..dim) with standard normals for one (stream, step) pair.
inline void fill_normals(double* out, std::size_t dim, std::uint64_t key,
                         std::uint64_t stream, std::uint32_t step) {
    for (std::size_t j = 0; j < dim; j += 2) {
        const auto [z0, z1] =
            normal_pair(key, stream, step, static_cast<std::uint32_t>(j / 2));
        out[j] = z0;
        if (j + 1 < dim) out[j + 1] = z1;
    }
}

// One uniform in [0,1) addressed like random_block.
inline double uniform01(std::uint64_t key, std::uint64_t stream,
                        std::uint32_t step, std::uint32_t draw) {
    const auto block = random_block(key, stream, step, draw);
    const std::uint64_t a =
        (static_cast<std::uint64_t>(block[1]) << 32) | block[0];
    return static_cast<double>(a >> 11) * 0x1.0p-53;
}

} // namespace cbo
