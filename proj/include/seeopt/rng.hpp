#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "seeopt/common.hpp"

namespace seeopt {

// Philox4x32-10 block cipher used as a counter-based generator. Each draw is
// addressed by (key, counter) alone, so streams split per path with no state
// to carry and no dependence on evaluation order or thread count.
struct Philox {
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
                   static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
                   static_cast<std::uint32_t>(p0)};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }
};

namespace detail {

inline std::array<std::uint32_t, 2> key_of(std::uint64_t seed) {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

// Two uniforms in (0, 1] from one block, built from 53-bit mantissas.
inline std::array<double, 2> uniforms(const std::array<std::uint32_t, 4>& b) {
    const auto u64 = [](std::uint32_t hi, std::uint32_t lo) {
        return (static_cast<std::uint64_t>(hi) << 32) | lo;
    };
    constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
    const double a = static_cast<double>(u64(b[0], b[1]) >> 11) * kScale;
    const double c = static_cast<double>(u64(b[2], b[3]) >> 11) * kScale;
    return {1.0 - a, 1.0 - c};
}

}  // namespace detail

// splitmix64 finalizer; used to derive per-outer-iteration seeds from a master
// seed without overlapping the path-level counter space.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Counter word 3 layout: [domain:4][mark:12][block:16].
enum class NoiseDomain : std::uint32_t { brownian = 0, jump = 1 };

inline std::array<std::uint32_t, 4> noise_counter(std::uint64_t path, std::uint32_t step,
                                                  NoiseDomain domain, std::uint32_t mark,
                                                  std::uint32_t block) {
    return {static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32), step,
            (static_cast<std::uint32_t>(domain) << 28) | ((mark & 0xFFFu) << 16) |
                (block & 0xFFFFu)};
}

// Standard normal addressed by (seed, path, step); Box-Muller on one block.
inline double normal_draw(std::uint64_t seed, std::uint64_t path, std::uint32_t step) {
    const auto b = Philox::block(noise_counter(path, step, NoiseDomain::brownian, 0, 0),
                                 detail::key_of(seed));
    const auto u = detail::uniforms(b);
    return std::sqrt(-2.0 * std::log(u[0])) * std::cos(2.0 * M_PI * u[1]);
}

// Poisson count by Knuth inversion; consumes uniforms from successive blocks
// of the (path, step, mark) jump domain. Intended for small mean * dt.
inline int poisson_draw(std::uint64_t seed, std::uint64_t path, std::uint32_t step,
                        std::uint32_t mark, double mean) {
    if (mean <= 0.0) return 0;
    const double threshold = std::exp(-mean);
    const auto key = detail::key_of(seed);
    double prod = 1.0;
    int count = -1;
    for (std::uint32_t block = 0; block < 0xFFFFu; ++block) {
        const auto u = detail::uniforms(
            Philox::block(noise_counter(path, step, NoiseDomain::jump, mark, block), key));
        for (double x : u) {
            ++count;
            prod *= x;
            if (prod <= threshold) return count;
        }
    }
    throw NumericalError("poisson_draw: uniform budget exhausted (mean too large?)");
}

// Sequential stream for utility draws (probe vectors, fixture generation).
// Keyed off (seed, stream) in a counter domain disjoint from path noise.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream)
        : key_(detail::key_of(mix_seed(seed, stream))) {}

    double uniform() {  // (0, 1]
        if (cache_pos_ == 0) {
            const std::array<std::uint32_t, 4> ctr = {
                static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                0xA5A5A5A5u, 0xF0000000u};
            ++counter_;
            cache_ = detail::uniforms(Philox::block(ctr, key_));
            cache_pos_ = 2;
        }
        return cache_[--cache_pos_];
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    VectorXd normal_vector(int n) {
        VectorXd v(n);
        for (int i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

    VectorXd unit_vector(int n) {
        VectorXd v = normal_vector(n);
        const double norm = v.norm();
        return norm > 0 ? VectorXd(v / norm) : unit_vector(n);
    }

private:
    std::array<std::uint32_t, 2> key_;
    std::uint64_t counter_ = 0;
    std::array<double, 2> cache_{};
    int cache_pos_ = 0;
};

}  // namespace seeopt
