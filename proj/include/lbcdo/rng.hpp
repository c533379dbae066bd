/*
   Copyright 2026 The lbcdo Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>
#include <numbers>

namespace lbcdo {

/// Philox4x32-10 counter-based generator. The output is
/// a pure function of (key, counter), so any stream can be regenerated from
/// its coordinates without shared state.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter apply(Counter c, Key k) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                k[0] += kW0;
                k[1] += kW1;
            }
            const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
        }
        return c;
    }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

/// Open-interval uniform in (0, 1) from 64 random bits.
inline double to_unit_open(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 21) ^ (static_cast<std::uint64_t>(lo) >> 11);
    return (static_cast<double>(bits & ((std::uint64_t{1} << 53) - 1)) + 0.5) * 0x1.0p-53;
}

/// Mixes a tag and up to two indices into a 64-bit stream id.
inline std::uint64_t stream_id(std::uint32_t tag, std::uint64_t i, std::uint64_t j = 0) {
    auto mix = [](std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(tag) ^ i) ^ j);
}

/// Sequential view on one counter-based stream: the n-th draw depends only on
/// (seed, stream, n).
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t start = 0)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream), block_(start) {}

    /// Two uniforms from one generator call.
    std::array<double, 2> uniform_pair() {
        const auto out = Philox4x32::apply(counter(block_++), key_);
        return {to_unit_open(out[0], out[1]), to_unit_open(out[2], out[3])};
    }

    double uniform() {
        if (have_uniform_) {
            have_uniform_ = false;
            return cached_uniform_;
        }
        const auto u = uniform_pair();
        cached_uniform_ = u[1];
        have_uniform_ = true;
        return u[0];
    }

    /// Standard normal by Box-Muller; pairs are cached.
    double normal() {
        if (have_normal_) {
            have_normal_ = false;
            return cached_normal_;
        }
        const auto u = uniform_pair();
        const double radius = std::sqrt(-2.0 * std::log(u[0]));
        const double angle = 2.0 * std::numbers::pi * u[1];
        cached_normal_ = radius * std::sin(angle);
        have_normal_ = true;
        return radius * std::cos(angle);
    }

private:
    Philox4x32::Counter counter(std::uint64_t n) const {
        return {static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n >> 32),
                static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    }

    Philox4x32::Key key_;
    std::uint64_t stream_;
    std::uint64_t block_;
    double cached_normal_ = 0.0;
    double cached_uniform_ = 0.0;
    bool have_normal_ = false;
    bool have_uniform_ = false;
};

/// Same values as out.size() successive RandomStream(seed, stream).normal()
/// calls, generated in bulk.
inline void fill_normals(std::uint64_t seed, std::uint64_t stream, std::span<double> out) {
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    const std::size_t pairs = (out.size() + 1) / 2;
    std::vector<double> u0(pairs), u1(pairs);
    for (std::size_t n = 0; n < pairs; ++n) {
        const auto r = Philox4x32::apply({static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n >> 32),
                                          static_cast<std::uint32_t>(stream),
                                          static_cast<std::uint32_t>(stream >> 32)},
                                         key);
        u0[n] = to_unit_open(r[0], r[1]);
        u1[n] = to_unit_open(r[2], r[3]);
    }
    for (std::size_t n = 0; n < pairs; ++n) {
        const double radius = std::sqrt(-2.0 * std::log(u0[n]));
        const double angle = 2.0 * std::numbers::pi * u1[n];
        out[2 * n] = radius * std::cos(angle);
        if (2 * n + 1 < out.size()) out[2 * n + 1] = radius * std::sin(angle);
    }
}

} // namespace lbcdo
