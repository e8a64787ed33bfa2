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
//
// hccs: generate synthetic attention logits, calibrate the clipped-linear
// softmax surrogate, run the integer kernel, evaluate fidelity against the
// exact softmax, validate parameter feasibility, and benchmark throughput.
//
// Exit codes: 0 success, 1 usage, 2 validation failure, 3 I/O or parse
// failure.

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hccs/bench.hpp"
#include "hccs/calibration.hpp"
#include "hccs/data.hpp"
#include "hccs/kernel.hpp"
#include "hccs/oracle.hpp"

namespace {

using namespace hccs;
using nlohmann::ordered_json;

class ValidationFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ---- shared helpers -------------------------------------------------------

OutputMode parse_mode(const std::string& name, int out_shift) {
    if (out_shift < 0 || out_shift > 8)
        throw CLI::ValidationError("--out-shift must be in [0, 8]");
    return bench::mode_from_string(name, static_cast<std::uint8_t>(out_shift));
}

struct HeadRef {
    int layer = 0;
    const data::HeadData* head = nullptr;
};

std::vector<HeadRef> all_heads(const data::CalibrationDataset& ds) {
    std::vector<HeadRef> refs;
    for (std::size_t l = 0; l < ds.layers.size(); ++l)
        for (const auto& hd : ds.layers[l].heads)
            refs.push_back({static_cast<int>(l), &hd});
    return refs;
}

/// Joins a params file against the dataset layout, producing one HeadParams
/// per head_id. Per-layer/global entries use head = -1 (and layer = -1 for
/// global) and fan out to the heads they cover.
ParamsTable resolve_params(const data::CalibrationDataset& ds,
                           const data::ParamsFile& pf) {
    ParamsTable table;
    auto assign = [&](std::uint16_t head_id, const HeadParams& hp) {
        auto [it, inserted] = table.insert({head_id, hp});
        if (!inserted &&
            (it->second.B != hp.B || it->second.S != hp.S ||
             it->second.D_max != hp.D_max))
            throw ValidationFailure("conflicting params for head " +
                                    std::to_string(head_id));
    };

    if (pf.granularity == "per-head") {
        for (const auto& e : pf.entries)
            assign(static_cast<std::uint16_t>(e.head), e.params);
    } else if (pf.granularity == "per-layer") {
        for (const auto& e : pf.entries) {
            if (e.layer < 0 || e.layer >= static_cast<int>(ds.layers.size()))
                throw ValidationFailure("params layer " +
                                        std::to_string(e.layer) +
                                        " not present in dataset");
            for (const auto& hd : ds.layers[e.layer].heads)
                assign(hd.head_id, e.params);
        }
    } else if (pf.granularity == "global") {
        if (pf.entries.size() != 1)
            throw ValidationFailure("global params file must have one entry");
        for (const auto& ref : all_heads(ds))
            assign(ref.head->head_id, pf.entries[0].params);
    } else {
        throw ValidationFailure("unknown granularity: " + pf.granularity);
    }

    for (const auto& ref : all_heads(ds)) {
        if (!table.contains(ref.head->head_id))
            throw ValidationFailure("no params for head " +
                                    std::to_string(ref.head->head_id));
        const auto check =
            calib::validate_params(table.at(ref.head->head_id), ds.n);
        if (!check.ok()) {
            std::string msg = "infeasible params for head " +
                              std::to_string(ref.head->head_id) + ":";
            for (const auto& v : check.violations) msg += " [" + v + "]";
            throw ValidationFailure(msg);
        }
    }
    return table;
}

/// Mean rank-ordered probability curves (exact softmax vs normalized HCCS)
/// for one head; n points, rank 0 = largest probability.
std::vector<data::CurvePoint> head_curves(const data::HeadData& head,
                                          std::uint16_t n,
                                          const HeadParams& hp,
                                          const OutputMode& mode) {
    std::vector<double> sm_acc(n, 0.0), hc_acc(n, 0.0);
    for (const auto& row : head.rows) {
        auto sm = oracle::softmax_exact(oracle::dequantize(row, head.scale));
        auto hc = oracle::to_prob_vector(hccs_row(row, hp, mode));
        std::sort(sm.p.begin(), sm.p.end(), std::greater<>());
        std::sort(hc.p.begin(), hc.p.end(), std::greater<>());
        for (std::uint16_t i = 0; i < n; ++i) {
            sm_acc[i] += sm.p[i];
            hc_acc[i] += hc.p[i];
        }
    }
    const double count = static_cast<double>(head.rows.size());
    std::vector<data::CurvePoint> points;
    points.reserve(n);
    for (std::uint16_t i = 0; i < n; ++i)
        points.push_back({static_cast<int>(i), head.head_id, sm_acc[i] / count,
                          hc_acc[i] / count});
    return points;
}

// ---- subcommands ----------------------------------------------------------

struct GenConfig {
    int layers = 1;
    int heads = 2;
    int n = 64;
    int rows = 64;
    std::vector<double> temps;
    std::uint64_t seed = 42;
    std::string out;
};

int cmd_gen(const GenConfig& cfg) {
    if (static_cast<int>(cfg.temps.size()) != cfg.heads)
        throw CLI::ValidationError("--temps must list one temperature per head (" +
                                   std::to_string(cfg.heads) + " expected)");
    data::CalibrationDataset ds;
    ds.n = static_cast<std::uint16_t>(cfg.n);
    for (int l = 0; l < cfg.layers; ++l) {
        data::LayerData layer;
        for (int h = 0; h < cfg.heads; ++h) {
            data::HeadSpec spec;
            spec.head_id = static_cast<std::uint16_t>(l * cfg.heads + h);
            spec.temperature = cfg.temps[h];
            spec.rows = static_cast<std::uint32_t>(cfg.rows);
            spec.n = ds.n;
            spec.seed = cfg.seed + spec.head_id;
            layer.heads.push_back(data::gen_head(spec));
        }
        ds.layers.push_back(std::move(layer));
    }
    data::write_dataset(ds, cfg.out);
    std::cout << "wrote " << cfg.out << ": " << cfg.layers << " layer(s) x "
              << cfg.heads << " head(s), " << cfg.rows << " rows of n=" << cfg.n
              << "\n";
    return 0;
}

struct CalibrateConfig {
    std::string dataset;
    std::string granularity = "per-head";
    std::string out;
    std::string report;
    int s_min = 1, s_max = 16;
    std::vector<int> d_values;
    int b_step = 0;
};

calib::GridSpec make_grid(const CalibrateConfig& cfg) {
    calib::GridSpec grid;
    if (cfg.s_min > cfg.s_max)
        throw CLI::ValidationError("--s-min must not exceed --s-max");
    for (int s = cfg.s_min; s <= cfg.s_max; ++s) grid.S_values.push_back(s);
    if (cfg.d_values.empty()) {
        grid.D_values = calib::GridSpec::defaults().D_values;
    } else {
        for (int d : cfg.d_values) grid.D_values.push_back(d);
        std::sort(grid.D_values.begin(), grid.D_values.end());
    }
    grid.B_step = cfg.b_step;
    return grid;
}

int cmd_calibrate(const CalibrateConfig& cfg) {
    const auto ds = data::read_dataset(cfg.dataset);
    const auto grid = make_grid(cfg);
    const auto granularity = calib::granularity_from_string(cfg.granularity);
    const auto report = calib::calibrate(ds, granularity, grid);
    data::write_params(calib::to_params_file(report), cfg.out);
    if (!cfg.report.empty())
        data::detail::write_file(cfg.report,
                                 calib::report_to_json(report).dump(2) + "\n");
    std::cout << "calibrated " << report.entries.size() << " scope(s), mean KL "
              << report.mean_kl() << " nats (" << report.evaluations
              << " grid evaluations)\n";
    return 0;
}

struct ApplyConfig {
    std::string dataset;
    std::string params;
    std::string mode = "i16_div";
    int out_shift = 0;
    unsigned workers = 1;
    std::string out;
    std::string curves;
};

int cmd_apply(const ApplyConfig& cfg) {
    const auto ds = data::read_dataset(cfg.dataset);
    const auto pf = data::read_params(cfg.params);
    const auto mode = parse_mode(cfg.mode, cfg.out_shift);
    const auto table = resolve_params(ds, pf);

    LogitTile tile;
    tile.n = ds.n;
    for (const auto& ref : all_heads(ds))
        for (const auto& row : ref.head->rows) {
            tile.data.insert(tile.data.end(), row.x.begin(), row.x.end());
            tile.head_ids.push_back(ref.head->head_id);
        }

    const auto probs = hccs_tile(tile, table, mode, cfg.workers);
    data::write_prob_tile(probs, cfg.out);

    if (!cfg.curves.empty()) {
        std::vector<data::CurvePoint> points;
        for (const auto& ref : all_heads(ds)) {
            auto head_points = head_curves(*ref.head, ds.n,
                                           table.at(ref.head->head_id), mode);
            points.insert(points.end(), head_points.begin(), head_points.end());
        }
        data::write_curves(points, cfg.curves);
    }
    std::cout << "applied " << bench::mode_name(mode) << " to " << probs.rows()
              << " rows -> " << cfg.out << "\n";
    return 0;
}

struct EvalConfig {
    std::string dataset;
    std::string params;
    std::string mode = "i16_div";
    int out_shift = 0;
    std::string out;
    std::string curves;
};

int cmd_eval(const EvalConfig& cfg) {
    const auto ds = data::read_dataset(cfg.dataset);
    const auto pf = data::read_params(cfg.params);
    const auto mode = parse_mode(cfg.mode, cfg.out_shift);
    const auto table = resolve_params(ds, pf);

    data::FidelityReport report;
    report.n = ds.n;
    report.mode = bench::mode_name(mode);
    for (const auto& ref : all_heads(ds)) {
        const auto& hd = *ref.head;
        const auto& hp = table.at(hd.head_id);
        data::FidelityHead fh;
        fh.layer = ref.layer;
        fh.head = hd.head_id;
        fh.rows = hd.rows.size();
        for (const auto& row : hd.rows) {
            const auto target =
                oracle::softmax_exact(oracle::dequantize(row, hd.scale));
            const auto surrogate =
                oracle::to_prob_vector(hccs_row(row, hp, mode));
            fh.mean_kl_nats += oracle::kl_divergence(target, surrogate);
            fh.mean_entropy_softmax += oracle::entropy(target);
            fh.mean_entropy_hccs += oracle::entropy(surrogate);
        }
        const double count = static_cast<double>(hd.rows.size());
        fh.mean_kl_nats /= count;
        fh.mean_entropy_softmax /= count;
        fh.mean_entropy_hccs /= count;
        report.heads.push_back(fh);
    }

    // Broad/focused labels by softmax-entropy rank: top half broad.
    std::vector<std::size_t> order(report.heads.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return report.heads[a].mean_entropy_softmax >
               report.heads[b].mean_entropy_softmax;
    });
    for (std::size_t rank = 0; rank < order.size(); ++rank)
        report.heads[order[rank]].label =
            rank < (order.size() + 1) / 2 ? "broad" : "focused";

    data::write_fidelity(report, cfg.out);
    if (!cfg.curves.empty()) {
        std::vector<data::CurvePoint> points;
        for (const auto& ref : all_heads(ds)) {
            auto head_points = head_curves(*ref.head, ds.n,
                                           table.at(ref.head->head_id), mode);
            points.insert(points.end(), head_points.begin(), head_points.end());
        }
        data::write_curves(points, cfg.curves);
    }
    for (const auto& h : report.heads)
        std::cout << "layer " << h.layer << " head " << h.head << ": KL "
                  << h.mean_kl_nats << " nats, entropy "
                  << h.mean_entropy_softmax << " (" << h.label << ")\n";
    return 0;
}

struct ValidateConfig {
    std::string params;
    int n_override = 0;
    std::string out;
};

int cmd_validate(const ValidateConfig& cfg) {
    const auto pf = data::read_params(cfg.params);
    const int n = cfg.n_override > 0 ? cfg.n_override : pf.n;
    ordered_json j;
    j["n"] = n;
    j["entries"] = ordered_json::array();
    bool all_ok = true;
    for (const auto& e : pf.entries) {
        const auto check = calib::validate_params(e.params, n);
        ordered_json je;
        je["layer"] = e.layer;
        je["head"] = e.head;
        je["ok"] = check.ok();
        je["violations"] = check.violations;
        j["entries"].push_back(je);
        all_ok = all_ok && check.ok();
        std::cout << "layer " << e.layer << " head " << e.head << ": "
                  << (check.ok() ? "ok" : "VIOLATION");
        for (const auto& v : check.violations) std::cout << " [" << v << "]";
        std::cout << "\n";
    }
    if (!cfg.out.empty()) data::detail::write_file(cfg.out, j.dump(2) + "\n");
    if (!all_ok) throw ValidationFailure("parameter validation failed");
    return 0;
}

struct BenchConfig {
    std::vector<std::string> modes{"i16_div", "i16_clb", "u8_div", "u8_clb"};
    std::vector<int> lengths{32, 64, 128};
    int rows = 4096;
    int repeats = 5;
    unsigned workers = 0;  // 0 = skip the multi-worker cross-check
    std::uint64_t seed = 42;
    std::vector<int> tiles;
    std::string out;
    std::string scaling_csv;
};

int cmd_bench(const BenchConfig& cfg) {
    ordered_json j;
    j["rows"] = cfg.rows;
    j["repeats"] = cfg.repeats;
    j["results"] = ordered_json::array();
    std::ostringstream scaling;
    scaling << "mode,n,tiles,elements_per_second\n";
    scaling.precision(17);

    for (const auto& mode_name : cfg.modes) {
        const auto mode = parse_mode(mode_name, 0);
        for (int n : cfg.lengths) {
            const auto res =
                bench::bench_mode(mode, static_cast<std::uint16_t>(n),
                                  static_cast<std::size_t>(cfg.rows),
                                  cfg.repeats, cfg.seed);
            ordered_json jr;
            jr["mode"] = mode_name;
            jr["n"] = n;
            jr["rows"] = res.rows;
            jr["repeats"] = res.repeats;
            jr["wall_time_s"] = res.wall_time_s;
            jr["elements_per_second"] = res.elements_per_second;
            jr["ns_per_row"] = res.ns_per_row;
            jr["checksum"] = std::to_string(res.checksum);
            jr["harness_overhead_frac"] = res.harness_overhead_frac;

            if (cfg.workers > 0) {
                const auto tile = bench::random_tile(
                    static_cast<std::uint16_t>(n),
                    static_cast<std::size_t>(cfg.rows), cfg.seed);
                const auto multi = hccs_tile(
                    tile, {{0, calib::default_params(n)}}, mode, cfg.workers);
                if (bench::checksum_values(multi.values) != res.checksum)
                    throw ValidationFailure(
                        "multi-worker checksum mismatch in " + mode_name);
                jr["multi_worker_checksum_ok"] = true;
            }
            j["results"].push_back(std::move(jr));

            if (!cfg.tiles.empty()) {
                for (const auto& pt : bench::tile_scaling(res, cfg.tiles))
                    scaling << mode_name << ',' << n << ',' << pt.tiles << ','
                            << pt.elements_per_second << "\n";
            }
            std::cout << mode_name << " n=" << n << ": "
                      << res.elements_per_second / 1e9 << " G elems/s, "
                      << res.ns_per_row << " ns/row\n";
        }
    }
    if (!cfg.out.empty()) data::detail::write_file(cfg.out, j.dump(2) + "\n");
    if (!cfg.scaling_csv.empty() && !cfg.tiles.empty())
        data::detail::write_file(cfg.scaling_csv, std::move(scaling).str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HCCS integer softmax surrogate toolchain"};
    app.require_subcommand(1);

    GenConfig gen_cfg;
    auto* gen = app.add_subcommand("gen", "generate a synthetic logit dataset");
    gen->add_option("--layers", gen_cfg.layers, "layer count")
        ->check(CLI::Range(1, 64));
    gen->add_option("--heads", gen_cfg.heads, "heads per layer")
        ->check(CLI::Range(1, 256));
    gen->add_option("--n", gen_cfg.n, "sequence length")->check(CLI::Range(1, 4096));
    gen->add_option("--rows", gen_cfg.rows, "rows per head")
        ->check(CLI::Range(1, 1 << 20));
    gen->add_option("--temps", gen_cfg.temps,
                    "comma-separated per-head temperatures")
        ->required()
        ->delimiter(',');
    gen->add_option("--seed", gen_cfg.seed, "base RNG seed");
    gen->add_option("-o,--out", gen_cfg.out, "output dataset path")->required();

    CalibrateConfig cal_cfg;
    auto* cal = app.add_subcommand("calibrate", "grid-search head parameters");
    cal->add_option("--dataset", cal_cfg.dataset, "input dataset")->required();
    cal->add_option("--granularity", cal_cfg.granularity,
                    "per-head | per-layer | global")
        ->check(CLI::IsMember({"per-head", "per-layer", "global"}));
    cal->add_option("-o,--out", cal_cfg.out, "output params JSON")->required();
    cal->add_option("--report", cal_cfg.report, "full calibration report JSON");
    cal->add_option("--s-min", cal_cfg.s_min, "smallest slope candidate");
    cal->add_option("--s-max", cal_cfg.s_max, "largest slope candidate");
    cal->add_option("--d-values", cal_cfg.d_values,
                    "comma-separated D_max candidates")
        ->delimiter(',');
    cal->add_option("--b-step", cal_cfg.b_step,
                    "B sweep stride (0 = auto, about 64 points per band)");

    ApplyConfig apply_cfg;
    auto* apply = app.add_subcommand("apply", "run the kernel over a dataset");
    apply->add_option("--dataset", apply_cfg.dataset, "input dataset")->required();
    apply->add_option("--params", apply_cfg.params, "params JSON")->required();
    apply->add_option("--mode", apply_cfg.mode,
                      "i16_div | i16_clb | u8_div | u8_clb")
        ->check(CLI::IsMember({"i16_div", "i16_clb", "u8_div", "u8_clb"}));
    apply->add_option("--out-shift", apply_cfg.out_shift, "u8 extra right shift");
    apply->add_option("--workers", apply_cfg.workers, "row partitions")
        ->check(CLI::Range(1u, 256u));
    apply->add_option("-o,--out", apply_cfg.out, "output probability tile")
        ->required();
    apply->add_option("--curves", apply_cfg.curves, "rank-probability CSV");

    EvalConfig eval_cfg;
    auto* eval = app.add_subcommand("eval", "fidelity metrics vs exact softmax");
    eval->add_option("--dataset", eval_cfg.dataset, "input dataset")->required();
    eval->add_option("--params", eval_cfg.params, "params JSON")->required();
    eval->add_option("--mode", eval_cfg.mode,
                     "i16_div | i16_clb | u8_div | u8_clb")
        ->check(CLI::IsMember({"i16_div", "i16_clb", "u8_div", "u8_clb"}));
    eval->add_option("--out-shift", eval_cfg.out_shift, "u8 extra right shift");
    eval->add_option("-o,--out", eval_cfg.out, "fidelity report JSON")->required();
    eval->add_option("--curves", eval_cfg.curves, "rank-probability CSV");

    ValidateConfig val_cfg;
    auto* val = app.add_subcommand("validate", "check params feasibility");
    val->add_option("--params", val_cfg.params, "params JSON")->required();
    val->add_option("--n", val_cfg.n_override,
                    "override sequence length (default: file's n)");
    val->add_option("-o,--out", val_cfg.out, "validation report JSON");

    BenchConfig bench_cfg;
    auto* ben = app.add_subcommand("bench", "throughput measurement");
    ben->add_option("--modes", bench_cfg.modes, "modes to benchmark")
        ->delimiter(',');
    ben->add_option("--n", bench_cfg.lengths, "sequence lengths")->delimiter(',');
    ben->add_option("--rows", bench_cfg.rows, "rows per timed pass")
        ->check(CLI::Range(1, 1 << 22));
    ben->add_option("--repeats", bench_cfg.repeats, "timed repeats (median)")
        ->check(CLI::Range(1, 1000));
    ben->add_option("--workers", bench_cfg.workers,
                    "also cross-check a multi-worker tile run");
    ben->add_option("--seed", bench_cfg.seed, "input RNG seed");
    ben->add_option("--tiles", bench_cfg.tiles,
                    "tile counts for linear-scaling extrapolation")
        ->delimiter(',');
    ben->add_option("-o,--out", bench_cfg.out, "bench result JSON");
    ben->add_option("--scaling-csv", bench_cfg.scaling_csv,
                    "tile-scaling CSV output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*gen) return cmd_gen(gen_cfg);
        if (*cal) return cmd_calibrate(cal_cfg);
        if (*apply) return cmd_apply(apply_cfg);
        if (*eval) return cmd_eval(eval_cfg);
        if (*val) return cmd_validate(val_cfg);
        if (*ben) return cmd_bench(bench_cfg);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const data::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 3;
    } catch (const ValidationFailure& e) {
        std::cerr << "validation failure: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation failure: " << e.what() << "\n";
        return 2;
    } catch (const std::out_of_range& e) {
        std::cerr << "validation failure: " << e.what() << "\n";
        return 2;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
