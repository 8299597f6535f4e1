#pragma once

// Truncated two-sided cylindrical Wiener process.
//
// Channel increments live on a lattice of base cells [j h0, (j+1) h0), j in Z.
// A cell value is a counter-based Gaussian draw keyed by (seed, path, channel,
// cell); finer dyadic sub-intervals are filled by Levy (Brownian bridge)
// refinement keyed by their heap position inside the cell. Values are held in
// fixed point (quantum 2^-40) so that a parent equals the sum of its children
// exactly, and so does every sum of adjacent intervals.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace cglavg {

namespace detail {

/// Philox4x32-10 block function (Salmon et al., SC'11).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += w0;
        key[1] += w1;
    }
    return ctr;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Standard normal from one Philox block (Box-Muller, cosine branch).
inline double philox_normal(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    const auto r = philox4x32(ctr, key);
    const std::uint64_t a = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
    const std::uint64_t b = (static_cast<std::uint64_t>(r[2]) << 32) | r[3];
    const double u1 = (static_cast<double>(a >> 11) + 0.5) * 0x1.0p-53;  // (0,1)
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;          // [0,1)
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

/// Counter-based stream of uniform/normal variates keyed by (seed, stream id).
/// Used for random initial data and test fields; the Wiener sampler has its
/// own key layout.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) {
        const std::uint64_t k = detail::splitmix64(seed ^ detail::splitmix64(stream + 0x5bd1e995ull));
        key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
        stream_ = stream;
    }

    double normal() {
        const std::uint64_t c = counter_++;
        return detail::philox_normal({static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32),
                                      static_cast<std::uint32_t>(stream_),
                                      static_cast<std::uint32_t>(stream_ >> 32) ^ 0xA5A5A5A5u},
                                     key_);
    }

    /// Uniform on [0, 1).
    double uniform() {
        const std::uint64_t c = counter_++;
        const auto r = detail::philox4x32({static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32),
                                           static_cast<std::uint32_t>(stream_),
                                           static_cast<std::uint32_t>(stream_ >> 32) ^ 0x5A5A5A5Au},
                                          key_);
        const std::uint64_t a = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
        return static_cast<double>(a >> 11) * 0x1.0p-53;
    }

private:
    std::array<std::uint32_t, 2> key_{};
    std::uint64_t stream_ = 0;
    std::uint64_t counter_ = 0;
};

/// Per-channel increment table, channel-major: value(channel, step).
class IncrementTable {
public:
    IncrementTable(std::size_t channels, std::size_t steps)
        : channels_(channels), steps_(steps), data_(channels * steps) {}
    std::size_t channels() const noexcept { return channels_; }
    std::size_t steps() const noexcept { return steps_; }
    double operator()(std::size_t channel, std::size_t step) const { return data_[channel * steps_ + step]; }
    double& operator()(std::size_t channel, std::size_t step) { return data_[channel * steps_ + step]; }

private:
    std::size_t channels_, steps_;
    std::vector<double> data_;
};

/// Seeded, truncated, two-sided cylindrical Wiener process with M channels.
///
/// Immutable; every query is a pure function of (seed, path, channel, interval),
/// so re-solving over [-n, t] for growing n reuses the same path.
class WienerSampler {
public:
    static constexpr double quantum = 0x1.0p-40;
    static constexpr int max_level = 30;

    WienerSampler(std::uint64_t seed, std::size_t channels, double base_step, std::uint64_t path = 0)
        : seed_(seed), channels_(channels), base_step_(base_step), path_(path) {
        if (channels == 0) throw InvalidArgument("WienerSampler needs at least one channel");
        if (!(base_step > 0.0) || !std::isfinite(base_step))
            throw InvalidArgument("WienerSampler base step must be positive");
        const std::uint64_t k = detail::splitmix64(seed ^ detail::splitmix64(path));
        key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t path() const noexcept { return path_; }
    std::size_t channels() const noexcept { return channels_; }
    double base_step() const noexcept { return base_step_; }

    /// Sampler for ensemble member `path` sharing seed, channels and lattice.
    WienerSampler for_path(std::uint64_t path) const {
        return WienerSampler(seed_, channels_, base_step_, path);
    }

    /// n_steps equal increments covering [t0, t1] for every channel. The step
    /// (t1 - t0) / n_steps and t0 must lie on the dyadic refinement lattice
    /// h0 2^-l for some level l <= max_level.
    IncrementTable increments(double t0, double t1, std::size_t n_steps) const {
        if (!(t0 < t1)) throw InvalidArgument("increments: require t0 < t1");
        if (n_steps == 0) throw InvalidArgument("increments: n_steps must be >= 1");
        const LatticeSpan span = locate(t0, (t1 - t0) / static_cast<double>(n_steps));
        IncrementTable table(channels_, n_steps);
        for (std::size_t c = 0; c < channels_; ++c)
            for (std::size_t s = 0; s < n_steps; ++s)
                table(c, s) = static_cast<double>(ticks_sum(c, span.level,
                                                            span.first + static_cast<std::int64_t>(s) * span.width,
                                                            span.width)) *
                              quantum;
        return table;
    }

    /// Cheap single-step form used by the integrator: increments for every
    /// channel over [t, t + dt], written to `out` (size == channels()).
    void step_increments(double t, double dt, std::span<double> out) const {
        const LatticeSpan span = locate(t, dt);
        for (std::size_t c = 0; c < channels_; ++c)
            out[c] = static_cast<double>(ticks_sum(c, span.level, span.first, span.width)) * quantum;
    }

private:
    struct LatticeSpan {
        int level;            // refinement level l: unit h0 2^-l
        std::int64_t first;   // index of the first unit
        std::int64_t width;   // units per step
    };

    static bool near_integer(double x, double& rounded) {
        rounded = std::nearbyint(x);
        return std::abs(x - rounded) <= 1e-10 * std::max(1.0, std::abs(x));
    }

    LatticeSpan locate(double t0, double step) const {
        for (int level = 0; level <= max_level; ++level) {
            const double unit = std::ldexp(base_step_, -level);
            double w, f;
            if (near_integer(step / unit, w) && near_integer(t0 / unit, f) && w >= 1.0)
                return {level, static_cast<std::int64_t>(f), static_cast<std::int64_t>(w)};
        }
        throw InvalidArgument("increments: interval is not on the dyadic refinement lattice");
    }

    std::int64_t cell_ticks(std::size_t channel, std::int64_t cell) const {
        const auto u = static_cast<std::uint64_t>(cell);
        const double z = detail::philox_normal(
            {1u, static_cast<std::uint32_t>(channel), static_cast<std::uint32_t>(u),
             static_cast<std::uint32_t>(u >> 32)},
            key_);
        return std::llround(z * std::sqrt(base_step_) / quantum);
    }

    /// Ticks of unit `index` at refinement `level` (unit length h0 2^-level).
    std::int64_t unit_ticks(std::size_t channel, int level, std::int64_t index) const {
        const std::int64_t cell = index >> level;  // floor division, also for negatives
        std::int64_t value = cell_ticks(channel, cell);
        const auto local = static_cast<std::uint64_t>(index - (cell << level));
        std::uint64_t heap = 1;
        double length = base_step_;
        const auto u = static_cast<std::uint64_t>(cell);
        for (int l = 0; l < level; ++l) {
            const double z = detail::philox_normal(
                {static_cast<std::uint32_t>(heap << 1), static_cast<std::uint32_t>(channel),
                 static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(u >> 32)},
                key_);
            // Left half given the parent total: mean v/2, variance length/4.
            const std::int64_t left =
                std::llround(0.5 * static_cast<double>(value) + 0.5 * std::sqrt(length) * z / quantum);
            const bool go_right = (local >> (level - 1 - l)) & 1u;
            value = go_right ? value - left : left;
            heap = (heap << 1) | (go_right ? 1u : 0u);
            length *= 0.5;
        }
        return value;
    }

    std::int64_t ticks_sum(std::size_t channel, int level, std::int64_t first, std::int64_t width) const {
        std::int64_t total = 0;
        std::int64_t i = first;
        const std::int64_t end = first + width;
        while (i < end) {
            // Largest aligned dyadic block starting at i that fits; reuse coarser
            // nodes so wide steps cost O(log) rather than O(width).
            int up = 0;
            while (up < level && ((i >> (up + 1)) << (up + 1)) == i && i + (std::int64_t{1} << (up + 1)) <= end)
                ++up;
            if (up == level) {
                // Whole base cells.
                const std::int64_t cell = i >> level;
                total += cell_ticks(channel, cell);
                i += std::int64_t{1} << level;
                continue;
            }
            total += unit_ticks(channel, level - up, i >> up);
            i += std::int64_t{1} << up;
        }
        return total;
    }

    std::uint64_t seed_;
    std::size_t channels_;
    double base_step_;
    std::uint64_t path_;
    std::array<std::uint32_t, 2> key_{};
};

/// Two views over the identical underlying path, used to couple the
/// oscillating and averaged systems.
inline std::pair<WienerSampler, WienerSampler> coupled_pair(const WienerSampler& sampler) {
    return {sampler, sampler};
}

}  // namespace cglavg
