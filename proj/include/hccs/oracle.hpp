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

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "hccs/kernel.hpp"

// Floating-point reference softmax, divergence/entropy metrics, and a wide
// integer transcription of the HCCS pipeline used for differential testing
// against the production kernel. The wide path is deliberately a plain
// int64 loop with no shared code.

namespace hccs::oracle {

struct ProbVector {
    std::vector<double> p;

    std::size_t size() const { return p.size(); }
    double operator[](std::size_t i) const { return p[i]; }
};

/// Max-centered exact softmax in double precision.
inline ProbVector softmax_exact(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("empty row");
    double m = x[0];
    for (double v : x) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite logit");
        if (v > m) m = v;
    }
    ProbVector out;
    out.p.resize(x.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out.p[i] = std::exp(x[i] - m);
        sum += out.p[i];
    }
    for (double& v : out.p) v /= sum;
    return out;
}

inline std::vector<double> dequantize(const LogitRow& row, double scale) {
    if (scale <= 0.0) throw std::invalid_argument("scale must be positive");
    std::vector<double> out(row.x.size());
    for (std::size_t i = 0; i < row.x.size(); ++i)
        out[i] = scale * static_cast<double>(row.x[i]);
    return out;
}

/// KL(p || q) in nats, with 0*ln(0) = 0. q must cover p's support.
inline double kl_divergence(const ProbVector& p, const ProbVector& q) {
    if (p.size() != q.size()) throw std::invalid_argument("length mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p.p[i] <= 0.0) continue;
        if (q.p[i] <= 0.0)
            throw std::invalid_argument("unsupported support mismatch");
        kl += p.p[i] * std::log(p.p[i] / q.p[i]);
    }
    return kl;
}

/// Shannon entropy in nats.
inline double entropy(const ProbVector& p) {
    double h = 0.0;
    for (double v : p.p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

/// Scaled integer HCCS output renormalized to a unit-sum distribution.
inline ProbVector to_prob_vector(const ProbRow& row) {
    double sum = 0.0;
    for (std::uint16_t v : row.p) sum += static_cast<double>(v);
    if (sum <= 0.0) throw std::invalid_argument("degenerate row sum");
    ProbVector out;
    out.p.resize(row.p.size());
    for (std::size_t i = 0; i < row.p.size(); ++i)
        out.p[i] = static_cast<double>(row.p[i]) / sum;
    return out;
}

/// Direct int64 transcription of the single-row HCCS inference, one stage
/// per loop. Must stay independent of the kernel implementation.
inline ProbRow hccs_wide_oracle(const LogitRow& row, const HeadParams& hp,
                                const OutputMode& mode) {
    const std::size_t n = row.x.size();
    if (n == 0) throw std::invalid_argument("empty row");
    if (!(hp.B > 0 && hp.S >= 0 && hp.D_max >= 1 && hp.D_max <= 127 &&
          static_cast<std::int64_t>(hp.B) -
                  static_cast<std::int64_t>(hp.S) * hp.D_max >=
              0))
        throw std::invalid_argument("infeasible params");

    std::int64_t m = row.x[0];
    for (std::size_t i = 1; i < n; ++i)
        if (row.x[i] > m) m = row.x[i];

    std::vector<std::int64_t> delta(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::int64_t d = m - static_cast<std::int64_t>(row.x[i]);
        if (d > hp.D_max) d = hp.D_max;
        delta[i] = d;
    }

    std::vector<std::int64_t> s(n);
    for (std::size_t i = 0; i < n; ++i)
        s[i] = static_cast<std::int64_t>(hp.B) -
               static_cast<std::int64_t>(hp.S) * delta[i];

    std::int64_t z = 0;
    for (std::size_t i = 0; i < n; ++i) z += s[i];
    if (z <= 0) throw std::invalid_argument("degenerate row sum");

    std::int64_t rho = 0;
    switch (mode.kind) {
        case OutputMode::I16_DIV:
            rho = 32767 / z;
            break;
        case OutputMode::I16_CLB: {
            std::int64_t k = 0;
            while ((std::int64_t{1} << (k + 1)) <= z) ++k;
            rho = 32767 >> k;
            break;
        }
        case OutputMode::U8_DIV:
            if (z < 256)
                throw std::invalid_argument("row sum below int8-path floor");
            rho = (255LL << 15) / z;
            break;
        case OutputMode::U8_CLB: {
            if (z < 256)
                throw std::invalid_argument("row sum below int8-path floor");
            std::int64_t k = 0;
            while ((std::int64_t{1} << (k + 1)) <= z) ++k;
            rho = (255LL << 15) >> k;
            break;
        }
    }

    ProbRow out;
    out.mode = mode;
    out.Z = static_cast<std::int32_t>(z);
    out.rho = static_cast<std::int32_t>(rho);
    out.p.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::int64_t v = s[i] * rho;
        if (mode.kind == OutputMode::U8_DIV || mode.kind == OutputMode::U8_CLB) {
            v >>= (15 + mode.out_shift);
            if (mode.kind == OutputMode::U8_CLB && v > 255) v = 255;
        }
        out.p[i] = static_cast<std::uint16_t>(v);
    }
    return out;
}

}  // namespace hccs::oracle
