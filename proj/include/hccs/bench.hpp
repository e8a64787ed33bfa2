/* Copyright 2026 The HCCS Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hccs/calibration.hpp"
#include "hccs/kernel.hpp"

// Host-side throughput measurement: median-of-repeats over pre-generated
// rows, with an output checksum so the kernel cannot be optimized away and
// so timed and untimed runs can be compared for bitwise equality.

namespace hccs::bench {

struct BenchResult {
    OutputMode mode;
    std::uint16_t n = 0;
    std::size_t rows = 0;
    int repeats = 0;
    unsigned workers = 1;
    double wall_time_s = 0.0;          // median over repeats
    double elements_per_second = 0.0;
    double ns_per_row = 0.0;
    std::uint64_t checksum = 0;
    double harness_overhead_frac = 0.0;  // empty-kernel time / kernel time
};

inline std::string mode_name(const OutputMode& mode) {
    switch (mode.kind) {
        case OutputMode::I16_DIV: return "i16_div";
        case OutputMode::I16_CLB: return "i16_clb";
        case OutputMode::U8_DIV: return "u8_div";
        case OutputMode::U8_CLB: return "u8_clb";
    }
    return "?";
}

inline OutputMode mode_from_string(const std::string& name,
                                   std::uint8_t out_shift = 0) {
    if (name == "i16_div") return OutputMode::i16_div();
    if (name == "i16_clb") return OutputMode::i16_clb();
    if (name == "u8_div") return OutputMode::u8_div(out_shift);
    if (name == "u8_clb") return OutputMode::u8_clb(out_shift);
    throw std::invalid_argument("unknown mode: " + name);
}

inline LogitTile random_tile(std::uint16_t n, std::size_t rows,
                             std::uint64_t seed, std::uint16_t head_id = 0) {
    LogitTile tile;
    tile.n = n;
    tile.data.resize(rows * n);
    tile.head_ids.assign(rows, head_id);
    std::mt19937_64 rng(seed);
    for (auto& v : tile.data)
        v = static_cast<std::int8_t>(static_cast<std::uint8_t>(rng()));
    return tile;
}

inline std::uint64_t checksum_values(std::span<const std::uint16_t> values) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (std::uint16_t v : values) {
        h ^= v;
        h *= 1099511628211ull;
    }
    return h;
}

/// Untimed reference run used to cross-check benchmark checksums.
inline std::uint64_t run_once_checksum(const LogitTile& tile,
                                       const HeadParams& hp,
                                       const OutputMode& mode) {
    std::vector<std::uint16_t> out(tile.rows() * tile.n);
    for (std::size_t r = 0; r < tile.rows(); ++r)
        hccs_row_into(tile.row(r), hp, mode,
                      {out.data() + r * tile.n, static_cast<std::size_t>(tile.n)});
    return checksum_values(out);
}

/// Median-of-repeats timing with one warm-up pass. Input rows are generated
/// outside the timed region; params come from the feasibility validator's
/// defaults for n.
inline BenchResult bench_mode(const OutputMode& mode, std::uint16_t n,
                              std::size_t rows, int repeats,
                              std::uint64_t seed = 42) {
    if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
    const HeadParams hp = calib::default_params(n);  // throws if infeasible
    const LogitTile tile = random_tile(n, rows, seed);
    std::vector<std::uint16_t> out(rows * n);

    using clock = std::chrono::steady_clock;
    auto timed_pass = [&]() {
        for (std::size_t r = 0; r < rows; ++r)
            hccs_row_into(tile.row(r), hp, mode,
                          {out.data() + r * n, static_cast<std::size_t>(n)});
    };
    // Same per-row loop with the kernel body removed; a barrier keeps the
    // loop and pointer arithmetic from being optimized away.
    auto noop_pass = [&]() {
        for (std::size_t r = 0; r < rows; ++r) {
            const std::int8_t* p = tile.data.data() + r * n;
#if defined(__GNUC__) || defined(__clang__)
            asm volatile("" : : "g"(p) : "memory");
#else
            volatile const std::int8_t sink = *p;
            (void)sink;
#endif
        }
    };

    timed_pass();  // warm-up
    const std::uint64_t checksum = checksum_values(out);

    std::vector<double> times;
    std::vector<double> noop_times;
    times.reserve(repeats);
    for (int i = 0; i < repeats; ++i) {
        const auto t0 = clock::now();
        timed_pass();
        const auto t1 = clock::now();
        times.push_back(std::chrono::duration<double>(t1 - t0).count());
        if (checksum_values(out) != checksum)
            throw std::logic_error("checksum drift across repeats");
        const auto n0 = clock::now();
        noop_pass();
        const auto n1 = clock::now();
        noop_times.push_back(std::chrono::duration<double>(n1 - n0).count());
    }

    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    const double t = median(times);
    const double t_noop = median(noop_times);

    BenchResult res;
    res.mode = mode;
    res.n = n;
    res.rows = rows;
    res.repeats = repeats;
    res.wall_time_s = t;
    res.elements_per_second =
        static_cast<double>(rows) * static_cast<double>(n) / t;
    res.ns_per_row = t * 1e9 / static_cast<double>(rows);
    res.checksum = checksum;
    res.harness_overhead_frac = t > 0.0 ? t_noop / t : 0.0;
    return res;
}

struct ScalingPoint {
    int tiles = 0;
    double elements_per_second = 0.0;
};

/// Rows are independent, so aggregate throughput is modeled as exactly
/// linear in the tile count.
inline std::vector<ScalingPoint> tile_scaling(const BenchResult& single,
                                              std::span<const int> tiles) {
    std::vector<ScalingPoint> out;
    out.reserve(tiles.size());
    for (int t : tiles) {
        if (t < 1) throw std::invalid_argument("tile counts must be positive");
        out.push_back({t, static_cast<double>(t) * single.elements_per_second});
    }
    return out;
}

}  // namespace hccs::bench
