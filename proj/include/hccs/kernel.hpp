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

#include <bit>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <vector>

// Head-calibrated clipped-linear softmax (HCCS): an integer-only softmax
// surrogate. Per row of int8 logits the pipeline is
//
//   m   = max_i x_i
//   d_i = min(m - x_i, D_max)          distance, clamped, fits uint8
//   s_i = B - S * d_i                  affine score, non-negative by calibration
//   Z   = sum_i s_i                    int32 accumulator
//   rho = reciprocal of Z at the target scale (exact division or CLB shift)
//   p_i = s_i * rho                    (right-shifted in the u8 output path)
//
// Every stage is integer arithmetic in the stated widths; there is no
// floating point anywhere in this header.

namespace hccs {

inline constexpr std::int32_t kI16Scale = 32767;  // T for int16 outputs
inline constexpr std::int32_t kU8Scale = 255;     // T for uint8 outputs
inline constexpr int kInvShift = 15;              // R, u8 shifted-reciprocal
inline constexpr std::int32_t kZFloorU8 = 256;    // min row sum on the u8 path

/// Per-head calibrated parameters. Feasibility for a sequence length n is
/// checked by calib::validate_params; the invariants enforced here are the
/// n-independent ones.
struct HeadParams {
    std::int16_t B = 0;       // score intercept, > 0
    std::int16_t S = 0;       // slope, >= 0
    std::uint8_t D_max = 0;   // distance clamp bound, in [1, 127]
};

inline bool params_well_formed(const HeadParams& hp) {
    return hp.B > 0 && hp.S >= 0 && hp.D_max >= 1 && hp.D_max <= 127 &&
           static_cast<std::int32_t>(hp.B) -
                   static_cast<std::int32_t>(hp.S) * hp.D_max >=
               0;
}

struct OutputMode {
    enum Kind : std::uint8_t {
        I16_DIV = 0,  // T = 32767, exact floor division
        I16_CLB = 1,  // T = 32767, leading-bit reciprocal
        U8_DIV = 2,   // T = 255, shifted reciprocal, R = 15
        U8_CLB = 3,   // T = 255, leading-bit variant (saturating)
    };

    Kind kind = I16_DIV;
    std::uint8_t out_shift = 0;  // u8 modes only

    static OutputMode i16_div() { return {I16_DIV, 0}; }
    static OutputMode i16_clb() { return {I16_CLB, 0}; }
    static OutputMode u8_div(std::uint8_t shift = 0) { return {U8_DIV, shift}; }
    static OutputMode u8_clb(std::uint8_t shift = 0) { return {U8_CLB, shift}; }

    bool is_u8() const { return kind == U8_DIV || kind == U8_CLB; }
    bool is_clb() const { return kind == I16_CLB || kind == U8_CLB; }
    std::int32_t target_scale() const { return is_u8() ? kU8Scale : kI16Scale; }

    friend bool operator==(const OutputMode& a, const OutputMode& b) {
        return a.kind == b.kind && a.out_shift == b.out_shift;
    }
};

struct LogitRow {
    std::vector<std::int8_t> x;
    std::uint16_t head_id = 0;
};

/// Scaled integer probabilities for one row. Values fit uint16 in the i16
/// modes (I16_CLB can exceed the target scale by up to 2x) and are <= 255 in
/// the u8 modes.
struct ProbRow {
    std::vector<std::uint16_t> p;
    std::int32_t Z = 0;
    std::int32_t rho = 0;
    OutputMode mode;
};

struct LogitTile {
    std::uint16_t n = 0;
    std::vector<std::int8_t> data;         // rows * n, row-major
    std::vector<std::uint16_t> head_ids;   // one per row

    std::size_t rows() const { return head_ids.size(); }
    std::span<const std::int8_t> row(std::size_t r) const {
        return {data.data() + r * n, static_cast<std::size_t>(n)};
    }
};

struct ProbTile {
    std::uint16_t n = 0;
    std::vector<std::uint16_t> values;     // rows * n, row-major
    std::vector<std::int32_t> Z;           // per row
    std::vector<std::int32_t> rho;         // per row
    std::vector<std::uint16_t> head_ids;   // per row, copied from input
    OutputMode mode;

    std::size_t rows() const { return Z.size(); }
    std::span<const std::uint16_t> row(std::size_t r) const {
        return {values.data() + r * n, static_cast<std::size_t>(n)};
    }
};

// ---- pipeline stages --------------------------------------------------

inline std::int8_t row_max(std::span<const std::int8_t> x) {
    if (x.empty()) throw std::invalid_argument("empty row");
    std::int8_t m = x[0];
    for (std::int8_t v : x)
        if (v > m) m = v;
    return m;
}

/// d_i = min(m - x_i, D_max). The raw difference can reach 255, so it is
/// formed in 16-bit before the clamp; the clamped value fits uint8.
inline void clamped_distances(std::span<const std::int8_t> x, std::int8_t m,
                              std::uint8_t d_max, std::span<std::uint8_t> out) {
    const std::int16_t wm = m;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::int16_t diff = static_cast<std::int16_t>(wm - x[i]);
        out[i] = static_cast<std::uint8_t>(
            diff < static_cast<std::int16_t>(d_max) ? diff : d_max);
    }
}

/// s_i = B - S * d_i. No zero-clamp: B - S*D_max >= 0 makes a rectifier
/// redundant. MAC in int32, stored int16.
inline void affine_scores(std::span<const std::uint8_t> delta,
                          const HeadParams& hp, std::span<std::int16_t> out) {
    if (!params_well_formed(hp)) throw std::invalid_argument("infeasible params");
    const std::int32_t b = hp.B;
    const std::int32_t s = hp.S;
    for (std::size_t i = 0; i < delta.size(); ++i)
        out[i] = static_cast<std::int16_t>(b - s * delta[i]);
}

inline std::int32_t row_sum(std::span<const std::int16_t> scores) {
    std::int32_t z = 0;
    for (std::int16_t v : scores) z += v;
    return z;
}

/// Q0 reciprocal: rho = floor(T / Z).
inline std::int32_t reciprocal_q0(std::int32_t z, std::int32_t t) {
    if (z <= 0) throw std::invalid_argument("degenerate row sum");
    return t / z;
}

/// Shifted reciprocal for the u8 output path: rho = floor(255 * 2^R / Z).
/// Z >= 256 keeps rho within int16.
inline std::int32_t reciprocal_u8(std::int32_t z, int r = kInvShift) {
    if (z < kZFloorU8) throw std::invalid_argument("row sum below int8-path floor");
    return (kU8Scale << r) / z;
}

/// Leading-bit reciprocal: k = floor(log2 Z), rho = floor(T / 2^k).
/// Overestimates T/Z by less than 2x since 2^k <= Z < 2^(k+1).
inline std::int32_t reciprocal_clb(std::int32_t z, std::int32_t t) {
    if (z <= 0) throw std::invalid_argument("degenerate row sum");
    const int k = std::bit_width(static_cast<std::uint32_t>(z)) - 1;
    return t >> k;
}

inline std::int32_t reciprocal_for_mode(std::int32_t z, const OutputMode& mode) {
    switch (mode.kind) {
        case OutputMode::I16_DIV: return reciprocal_q0(z, kI16Scale);
        case OutputMode::I16_CLB: return reciprocal_clb(z, kI16Scale);
        case OutputMode::U8_DIV: return reciprocal_u8(z);
        case OutputMode::U8_CLB:
            if (z < kZFloorU8)
                throw std::invalid_argument("row sum below int8-path floor");
            return reciprocal_clb(z, kU8Scale << kInvShift);
    }
    throw std::invalid_argument("bad output mode");
}

/// i16 modes: p_i = s_i * rho. u8 modes: p_i = (s_i * rho) >> (R + out_shift),
/// saturated at 255 in CLB mode only (exact division provably stays in range).
inline void normalize(std::span<const std::int16_t> scores, std::int32_t rho,
                      const OutputMode& mode, std::span<std::uint16_t> out) {
    if (!mode.is_u8()) {
        for (std::size_t i = 0; i < scores.size(); ++i)
            out[i] = static_cast<std::uint16_t>(scores[i] * rho);
        return;
    }
    const int shift = kInvShift + mode.out_shift;
    if (mode.kind == OutputMode::U8_DIV) {
        for (std::size_t i = 0; i < scores.size(); ++i)
            out[i] = static_cast<std::uint16_t>((scores[i] * rho) >> shift);
    } else {
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const std::int32_t v = (scores[i] * rho) >> shift;
            out[i] = static_cast<std::uint16_t>(v < kU8Scale ? v : kU8Scale);
        }
    }
}

// ---- single row / tile ------------------------------------------------

/// Full pipeline for one row, writing into caller-provided storage.
/// Returns {Z, rho}. `p` must have x.size() elements.
inline std::pair<std::int32_t, std::int32_t> hccs_row_into(
    std::span<const std::int8_t> x, const HeadParams& hp,
    const OutputMode& mode, std::span<std::uint16_t> p) {
    const std::size_t n = x.size();
    // Stage buffers stay on the stack for typical attention lengths.
    std::uint8_t delta_buf[512];
    std::int16_t score_buf[512];
    std::vector<std::uint8_t> delta_heap;
    std::vector<std::int16_t> score_heap;
    std::span<std::uint8_t> delta(delta_buf, n);
    std::span<std::int16_t> scores(score_buf, n);
    if (n > 512) {
        delta_heap.resize(n);
        score_heap.resize(n);
        delta = delta_heap;
        scores = score_heap;
    }

    const std::int8_t m = row_max(x);
    clamped_distances(x, m, hp.D_max, delta);
    affine_scores(delta, hp, scores);
    const std::int32_t z = row_sum(scores);
    const std::int32_t rho = reciprocal_for_mode(z, mode);
    normalize(scores, rho, mode, p);
    return {z, rho};
}

inline ProbRow hccs_row(const LogitRow& row, const HeadParams& hp,
                        const OutputMode& mode) {
    ProbRow out;
    out.mode = mode;
    out.p.resize(row.x.size());
    auto [z, rho] = hccs_row_into(row.x, hp, mode, out.p);
    out.Z = z;
    out.rho = rho;
    return out;
}

using ParamsTable = std::unordered_map<std::uint16_t, HeadParams>;

/// Row-parallel tile inference. Rows are split into disjoint contiguous
/// partitions, one worker per partition, no cross-row communication; the
/// output is bitwise independent of the worker count.
inline ProbTile hccs_tile(const LogitTile& tile, const ParamsTable& params,
                          const OutputMode& mode, unsigned workers = 1) {
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
    for (std::uint16_t id : tile.head_ids)
        if (!params.contains(id)) throw std::out_of_range("unknown head");

    const std::size_t rows = tile.rows();
    ProbTile out;
    out.n = tile.n;
    out.mode = mode;
    out.head_ids = tile.head_ids;
    out.values.resize(rows * tile.n);
    out.Z.resize(rows);
    out.rho.resize(rows);

    auto run_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t r = lo; r < hi; ++r) {
            const HeadParams& hp = params.at(tile.head_ids[r]);
            std::span<std::uint16_t> dst{out.values.data() + r * tile.n,
                                         static_cast<std::size_t>(tile.n)};
            auto [z, rho] = hccs_row_into(tile.row(r), hp, mode, dst);
            out.Z[r] = z;
            out.rho[r] = rho;
        }
    };

    const unsigned k =
        static_cast<unsigned>(std::min<std::size_t>(workers, rows ? rows : 1));
    if (k <= 1) {
        run_range(0, rows);
        return out;
    }

    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(k);
    pool.reserve(k);
    for (unsigned w = 0; w < k; ++w) {
        const std::size_t lo = rows * w / k;
        const std::size_t hi = rows * (w + 1) / k;
        pool.emplace_back([&, lo, hi, w] {
            try {
                run_range(lo, hi);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

}  // namespace hccs
