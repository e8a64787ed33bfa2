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
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "hccs/data.hpp"
#include "hccs/kernel.hpp"
#include "hccs/oracle.hpp"

// Offline calibration of (B, S, D_max) per head / per layer / global:
// exhaustive grid search minimizing mean KL from the exact softmax target
// to the integer surrogate distribution, evaluated in the int16 output
// space. The admissible region per sequence length n is
//
//   D_max <= 127
//   B - S * D_max >= 0
//   B <= 32767
//   n * (B - S * D_max) >= 256      (row-sum floor, binds the u8 path)
//   n * B <= 32767                  (row-sum ceiling, binds the i16 path)
//
// which collapses to the operating band
//   S * D_max + ceil(256 / n) <= B <= floor(32767 / n).

namespace hccs::calib {

struct FeasibilityBand {
    std::int32_t B_lo = 0;
    std::int32_t B_hi = 0;

    bool empty() const { return B_lo > B_hi; }
};

inline FeasibilityBand feasibility_band(std::int32_t n, std::int32_t s,
                                        std::int32_t d_max) {
    FeasibilityBand band;
    band.B_lo = s * d_max + (256 + n - 1) / n;
    band.B_hi = 32767 / n;
    return band;
}

struct ParamCheck {
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
};

/// Named feasibility checks; violations are data, not errors.
inline ParamCheck validate_params(const HeadParams& hp, std::int32_t n) {
    ParamCheck check;
    const std::int64_t b = hp.B;
    const std::int64_t s = hp.S;
    const std::int64_t d = hp.D_max;
    const std::int64_t floor_score = b - s * d;
    if (b < 1) check.violations.push_back("B > 0");
    if (s < 0) check.violations.push_back("S >= 0");
    if (d < 1) check.violations.push_back("D_max >= 1");
    if (d > 127) check.violations.push_back("D_max <= 127");
    if (floor_score < 0) check.violations.push_back("B - S*D_max >= 0");
    if (b > 32767) check.violations.push_back("B <= 32767");
    if (n * floor_score < 256)
        check.violations.push_back("Z floor (n*(B - S*D_max) >= 256)");
    if (n * b > 32767) check.violations.push_back("n*B <= 32767");
    return check;
}

/// A feasible mid-grid configuration used when no calibration is supplied
/// (bench defaults, uncalibrated baselines).
inline HeadParams default_params(std::int32_t n) {
    HeadParams hp;
    hp.S = 2;
    hp.D_max = 64;
    const FeasibilityBand band = feasibility_band(n, hp.S, hp.D_max);
    if (band.empty()) throw std::invalid_argument("infeasible defaults");
    hp.B = static_cast<std::int16_t>(band.B_lo);
    return hp;
}

struct GridSpec {
    std::vector<std::int32_t> S_values;   // ascending, >= 0
    std::vector<std::int32_t> D_values;   // ascending, within [1, 127]
    std::int32_t B_step = 0;              // 0 = auto: max(1, (B_hi - B_lo) / 64)

    static GridSpec defaults() {
        GridSpec g;
        for (std::int32_t s = 1; s <= 16; ++s) g.S_values.push_back(s);
        for (std::int32_t d = 8; d <= 120; d += 8) g.D_values.push_back(d);
        g.D_values.push_back(127);
        return g;
    }
};

inline void check_grid(const GridSpec& grid) {
    if (grid.S_values.empty() || grid.D_values.empty())
        throw std::invalid_argument("empty grid axes");
    if (!std::is_sorted(grid.S_values.begin(), grid.S_values.end()) ||
        !std::is_sorted(grid.D_values.begin(), grid.D_values.end()))
        throw std::invalid_argument("grid axes must be ascending");
    if (grid.S_values.front() < 0) throw std::invalid_argument("S must be >= 0");
    if (grid.D_values.front() < 1 || grid.D_values.back() > 127)
        throw std::invalid_argument("D_max candidates must be in [1,127]");
    if (grid.B_step < 0) throw std::invalid_argument("B_step must be positive");
}

namespace detail {

/// ln(k) for k in [1, 32767]; the surrogate side of the objective only
/// takes logs of int16-scale integers.
inline double log_of_int(std::int32_t v) {
    static const std::vector<double> table = [] {
        std::vector<double> t(32768, 0.0);
        for (std::size_t i = 1; i < t.size(); ++i)
            t[i] = std::log(static_cast<double>(i));
        return t;
    }();
    return table[static_cast<std::size_t>(v)];
}

/// Precomputed softmax targets for a calibration scope.
struct ObjectiveContext {
    std::uint16_t n = 0;
    std::vector<const LogitRow*> rows;
    std::vector<std::vector<double>> targets;  // exact softmax per row
    std::vector<double> target_logterm;        // sum_i t_i * ln(t_i)

    void add(const LogitRow& row, double scale) {
        if (n == 0) n = static_cast<std::uint16_t>(row.x.size());
        if (row.x.size() != n)
            throw std::invalid_argument("rows must share the sequence length");
        rows.push_back(&row);
        auto sm = oracle::softmax_exact(oracle::dequantize(row, scale));
        double logterm = 0.0;
        for (double t : sm.p)
            if (t > 0.0) logterm += t * std::log(t);
        targets.push_back(std::move(sm.p));
        target_logterm.push_back(logterm);
    }

    /// Mean KL(target || surrogate) with the surrogate run through the
    /// integer pipeline in I16_DIV mode.
    double eval(const HeadParams& hp) const {
        std::uint16_t pbuf[512];
        std::vector<std::uint16_t> pheap;
        std::span<std::uint16_t> p(pbuf, n);
        if (n > 512) {
            pheap.resize(n);
            p = pheap;
        }
        double total = 0.0;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            hccs_row_into(rows[r]->x, hp, OutputMode::i16_div(), p);
            std::int32_t psum = 0;
            for (std::uint16_t v : p) psum += v;
            double cross = 0.0;
            const auto& t = targets[r];
            for (std::size_t i = 0; i < t.size(); ++i)
                if (t[i] > 0.0) cross += t[i] * log_of_int(p[i]);
            total += target_logterm[r] - cross + log_of_int(psum);
        }
        return total / static_cast<double>(rows.size());
    }
};

struct Candidate {
    double kl = 0.0;
    HeadParams params;

    // Total order (KL, S, D_max, B): the reported minimizer is independent
    // of evaluation order.
    bool operator<(const Candidate& other) const {
        return std::tie(kl, params.S, params.D_max, params.B) <
               std::tie(other.kl, other.params.S, other.params.D_max,
                        other.params.B);
    }
};

struct SearchOutcome {
    HeadParams params;
    double kl = 0.0;
    std::uint64_t evaluations = 0;
};

inline SearchOutcome search(const ObjectiveContext& ctx, const GridSpec& grid) {
    check_grid(grid);
    if (ctx.rows.empty()) throw std::invalid_argument("no calibration rows");
    bool found = false;
    Candidate best;
    std::uint64_t evals = 0;
    for (std::int32_t s : grid.S_values) {
        for (std::int32_t d : grid.D_values) {
            const FeasibilityBand band = feasibility_band(ctx.n, s, d);
            if (band.empty()) continue;  // skipped silently
            const std::int32_t step =
                grid.B_step > 0
                    ? grid.B_step
                    : std::max<std::int32_t>(1, (band.B_hi - band.B_lo) / 64);
            std::int32_t b = band.B_lo;
            bool hi_done = false;
            while (true) {
                HeadParams hp;
                hp.B = static_cast<std::int16_t>(b);
                hp.S = static_cast<std::int16_t>(s);
                hp.D_max = static_cast<std::uint8_t>(d);
                Candidate cand{ctx.eval(hp), hp};
                ++evals;
                if (!found || cand < best) {
                    best = cand;
                    found = true;
                }
                if (b == band.B_hi) hi_done = true;
                if (b > band.B_hi - step) break;
                b += step;
            }
            if (!hi_done && band.B_hi >= band.B_lo) {
                HeadParams hp;
                hp.B = static_cast<std::int16_t>(band.B_hi);
                hp.S = static_cast<std::int16_t>(s);
                hp.D_max = static_cast<std::uint8_t>(d);
                Candidate cand{ctx.eval(hp), hp};
                ++evals;
                if (!found || cand < best) {
                    best = cand;
                    found = true;
                }
            }
        }
    }
    if (!found) throw std::runtime_error("empty feasible grid");
    return {best.params, best.kl, evals};
}

}  // namespace detail

/// Mean KL objective for one candidate over uniform-scale rows, int16 space.
inline double objective_kl(std::span<const LogitRow> rows, const HeadParams& hp,
                           double scale) {
    if (rows.empty()) throw std::invalid_argument("no calibration rows");
    const auto check = validate_params(hp, static_cast<std::int32_t>(rows[0].x.size()));
    if (!check.ok()) throw std::invalid_argument("infeasible params");
    detail::ObjectiveContext ctx;
    for (const auto& row : rows) ctx.add(row, scale);
    return ctx.eval(hp);
}

struct SearchResult {
    HeadParams params;
    double kl = 0.0;
    std::uint64_t evaluations = 0;
};

/// Exhaustive grid search over (S, D_max) x the B operating band.
inline SearchResult grid_search(std::span<const LogitRow> rows, std::uint16_t n,
                                const GridSpec& grid, double scale) {
    detail::ObjectiveContext ctx;
    ctx.n = n;
    for (const auto& row : rows) ctx.add(row, scale);
    const auto out = detail::search(ctx, grid);
    return {out.params, out.kl, out.evaluations};
}

enum class Granularity { per_head, per_layer, global_scope };

inline std::string to_string(Granularity g) {
    switch (g) {
        case Granularity::per_head: return "per-head";
        case Granularity::per_layer: return "per-layer";
        case Granularity::global_scope: return "global";
    }
    return "?";
}

inline Granularity granularity_from_string(const std::string& s) {
    if (s == "per-head") return Granularity::per_head;
    if (s == "per-layer") return Granularity::per_layer;
    if (s == "global") return Granularity::global_scope;
    throw std::invalid_argument("unknown granularity: " + s);
}

struct ReportEntry {
    int layer = -1;           // -1 when the scope spans layers
    int head = -1;            // -1 when the scope spans heads
    HeadParams params;
    double kl = 0.0;
    std::size_t samples = 0;
};

struct CalibrationReport {
    Granularity granularity = Granularity::per_head;
    std::uint16_t n = 0;
    GridSpec grid;
    std::uint64_t evaluations = 0;
    std::vector<ReportEntry> entries;

    double mean_kl() const {
        double total = 0.0;
        for (const auto& e : entries) total += e.kl;
        return entries.empty() ? 0.0 : total / static_cast<double>(entries.size());
    }
};

/// One grid search per scope: head scopes use the head's rows, layer scopes
/// pool the layer's heads (per-head dequantization scales are kept), the
/// global scope pools everything.
inline CalibrationReport calibrate(const data::CalibrationDataset& ds,
                                   Granularity granularity,
                                   const GridSpec& grid) {
    CalibrationReport report;
    report.granularity = granularity;
    report.n = ds.n;
    report.grid = grid;

    auto run_scope = [&](int layer, int head,
                         const std::vector<const data::HeadData*>& heads) {
        detail::ObjectiveContext ctx;
        ctx.n = ds.n;
        std::size_t samples = 0;
        for (const auto* hd : heads)
            for (const auto& row : hd->rows) {
                ctx.add(row, hd->scale);
                ++samples;
            }
        const auto out = detail::search(ctx, grid);
        report.evaluations += out.evaluations;
        report.entries.push_back({layer, head, out.params, out.kl, samples});
    };

    if (granularity == Granularity::per_head) {
        for (std::size_t l = 0; l < ds.layers.size(); ++l)
            for (const auto& hd : ds.layers[l].heads)
                run_scope(static_cast<int>(l), hd.head_id, {&hd});
    } else if (granularity == Granularity::per_layer) {
        for (std::size_t l = 0; l < ds.layers.size(); ++l) {
            std::vector<const data::HeadData*> heads;
            for (const auto& hd : ds.layers[l].heads) heads.push_back(&hd);
            run_scope(static_cast<int>(l), -1, heads);
        }
    } else {
        std::vector<const data::HeadData*> heads;
        for (const auto& layer : ds.layers)
            for (const auto& hd : layer.heads) heads.push_back(&hd);
        run_scope(-1, -1, heads);
    }

    for (const auto& e : report.entries)
        if (!validate_params(e.params, ds.n).ok())
            throw std::logic_error("calibrate produced infeasible params");
    return report;
}

inline data::ParamsFile to_params_file(const CalibrationReport& report) {
    data::ParamsFile pf;
    pf.n = report.n;
    pf.granularity = to_string(report.granularity);
    for (const auto& e : report.entries)
        pf.entries.push_back({e.layer, e.head, e.params, e.kl});
    return pf;
}

inline nlohmann::ordered_json report_to_json(const CalibrationReport& report) {
    nlohmann::ordered_json j;
    j["n"] = report.n;
    j["granularity"] = to_string(report.granularity);
    j["objective_mode"] = "i16_div";
    j["grid"] = {{"S_values", report.grid.S_values},
                 {"D_values", report.grid.D_values},
                 {"B_step", report.grid.B_step}};
    j["evaluations"] = report.evaluations;
    j["entries"] = nlohmann::ordered_json::array();
    for (const auto& e : report.entries) {
        nlohmann::ordered_json je;
        je["layer"] = e.layer;
        je["head"] = e.head;
        je["B"] = e.params.B;
        je["S"] = e.params.S;
        je["D_max"] = e.params.D_max;
        je["kl_nats"] = e.kl;
        je["samples"] = e.samples;
        j["entries"].push_back(std::move(je));
    }
    return j;
}

}  // namespace hccs::calib
