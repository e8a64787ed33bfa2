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
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hccs/kernel.hpp"

// Synthetic logit generation, int8 quantization, and the file formats:
// dataset binary, params JSON, report JSON, curves CSV.

namespace hccs::data {

class ParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ---- generation ---------------------------------------------------------

/// Spec for one synthetic attention head. High temperature flattens the
/// softmax target (broad head), low temperature sharpens it (focused head).
struct HeadSpec {
    std::uint16_t head_id = 0;
    double temperature = 1.0;
    std::uint32_t rows = 64;
    std::uint16_t n = 64;
    std::uint64_t seed = 42;
};

struct HeadData {
    std::uint16_t head_id = 0;
    double scale = 1.0;               // dequantization scale, shared by rows
    std::vector<LogitRow> rows;
};

struct LayerData {
    std::vector<HeadData> heads;
};

struct CalibrationDataset {
    std::uint16_t n = 0;
    std::vector<LayerData> layers;

    std::size_t total_rows() const {
        std::size_t c = 0;
        for (const auto& l : layers)
            for (const auto& h : l.heads) c += h.rows.size();
        return c;
    }
};

/// Box-Muller over mt19937_64. std::normal_distribution's sequence is
/// implementation-defined; this one is pinned.
class GaussianGen {
  public:
    explicit GaussianGen(std::uint64_t seed) : rng_(seed) {}

    double next() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(1.0 - u1));  // 1-u1 in (0,1]
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

  private:
    double uniform01() {  // [0, 1), 53-bit
        return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    }

    std::mt19937_64 rng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Symmetric per-row max-abs quantization to [-127, 127].
inline std::pair<LogitRow, double> quantize_logits(std::span<const double> raw) {
    double max_abs = 0.0;
    for (double v : raw) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite logit");
        max_abs = std::max(max_abs, std::fabs(v));
    }
    LogitRow row;
    row.x.resize(raw.size());
    if (max_abs == 0.0) return {std::move(row), 1.0};
    const double scale = max_abs / 127.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double q = std::round(raw[i] / scale);
        row.x[i] = static_cast<std::int8_t>(std::clamp(q, -127.0, 127.0));
    }
    return {std::move(row), scale};
}

/// Generates one head: N(0,1)/temperature raw logits, quantized with a
/// single max-abs scale shared across the head's rows (the dataset format
/// records one scale per head).
inline HeadData gen_head(const HeadSpec& spec) {
    if (spec.temperature <= 0.0)
        throw std::invalid_argument("temperature must be positive");
    if (spec.n < 1) throw std::invalid_argument("n must be >= 1");

    GaussianGen gen(spec.seed);
    std::vector<std::vector<double>> raw(spec.rows,
                                         std::vector<double>(spec.n));
    double max_abs = 0.0;
    for (auto& r : raw)
        for (auto& v : r) {
            v = gen.next() / spec.temperature;
            max_abs = std::max(max_abs, std::fabs(v));
        }

    HeadData head;
    head.head_id = spec.head_id;
    head.scale = max_abs > 0.0 ? max_abs / 127.0 : 1.0;
    head.rows.reserve(spec.rows);
    for (const auto& r : raw) {
        LogitRow row;
        row.head_id = spec.head_id;
        row.x.resize(spec.n);
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double q = std::round(r[i] / head.scale);
            row.x[i] = static_cast<std::int8_t>(std::clamp(q, -127.0, 127.0));
        }
        head.rows.push_back(std::move(row));
    }
    return head;
}

// ---- dataset binary format ----------------------------------------------
//
// magic "HCCS" | version u16 | layer count u16
// per layer:  head count u16
// per head:   head_id u16 | n u16 | row count u32 | scale f64 | rows int8[]
// All integers little-endian, rows row-major.

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
  public:
    Reader(const std::string& buf, const std::string& what)
        : buf_(buf), what_(what) {}

    std::size_t offset() const { return pos_; }

    const char* take(std::size_t count) {
        if (pos_ + count > buf_.size())
            throw ParseError(what_ + ": unexpected end of file at offset " +
                             std::to_string(buf_.size()));
        const char* p = buf_.data() + pos_;
        pos_ += count;
        return p;
    }

    std::uint16_t u16() {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(take(2));
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }

    std::uint32_t u32() {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(take(4));
        return p[0] | (p[1] << 8) | (p[2] << 16) |
               (static_cast<std::uint32_t>(p[3]) << 24);
    }

    double f64() {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(take(8));
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

  private:
    const std::string& buf_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

inline void write_file(const std::filesystem::path& path,
                       const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace detail

inline constexpr char kDatasetMagic[4] = {'H', 'C', 'C', 'S'};
inline constexpr std::uint16_t kDatasetVersion = 1;

inline std::string serialize_dataset(const CalibrationDataset& ds) {
    std::string out;
    out.append(kDatasetMagic, 4);
    detail::put_u16(out, kDatasetVersion);
    detail::put_u16(out, static_cast<std::uint16_t>(ds.layers.size()));
    for (const auto& layer : ds.layers) {
        detail::put_u16(out, static_cast<std::uint16_t>(layer.heads.size()));
        for (const auto& head : layer.heads) {
            detail::put_u16(out, head.head_id);
            detail::put_u16(out, ds.n);
            detail::put_u32(out, static_cast<std::uint32_t>(head.rows.size()));
            detail::put_f64(out, head.scale);
            for (const auto& row : head.rows)
                out.append(reinterpret_cast<const char*>(row.x.data()),
                           row.x.size());
        }
    }
    return out;
}

inline CalibrationDataset parse_dataset(const std::string& bytes,
                                        const std::string& what = "dataset") {
    detail::Reader r(bytes, what);
    const char* magic = r.take(4);
    if (std::memcmp(magic, kDatasetMagic, 4) != 0)
        throw ParseError(what + ": bad magic at offset 0");
    const std::uint16_t version = r.u16();
    if (version != kDatasetVersion)
        throw ParseError(what + ": unsupported version " +
                         std::to_string(version) + " at offset 4");
    CalibrationDataset ds;
    const std::uint16_t layer_count = r.u16();
    ds.layers.resize(layer_count);
    bool have_n = false;
    for (auto& layer : ds.layers) {
        const std::uint16_t head_count = r.u16();
        layer.heads.resize(head_count);
        for (auto& head : layer.heads) {
            head.head_id = r.u16();
            const std::size_t n_offset = r.offset();
            const std::uint16_t n = r.u16();
            if (n < 1)
                throw ParseError(what + ": zero sequence length at offset " +
                                 std::to_string(n_offset));
            if (!have_n) {
                ds.n = n;
                have_n = true;
            } else if (n != ds.n) {
                throw ParseError(what +
                                 ": inconsistent sequence length at offset " +
                                 std::to_string(n_offset));
            }
            const std::uint32_t rows = r.u32();
            const std::size_t scale_offset = r.offset();
            head.scale = r.f64();
            if (!(head.scale > 0.0))
                throw ParseError(what + ": non-positive scale at offset " +
                                 std::to_string(scale_offset));
            // Reject impossible row counts before allocating for them.
            if (static_cast<std::uint64_t>(rows) * n >
                bytes.size() - r.offset())
                throw ParseError(what + ": unexpected end of file at offset " +
                                 std::to_string(bytes.size()));
            head.rows.resize(rows);
            for (auto& row : head.rows) {
                row.head_id = head.head_id;
                const char* p = r.take(n);
                row.x.resize(n);
                std::memcpy(row.x.data(), p, n);
            }
        }
    }
    if (r.offset() != bytes.size())
        throw ParseError(what + ": trailing bytes at offset " +
                         std::to_string(r.offset()));
    return ds;
}

inline void write_dataset(const CalibrationDataset& ds,
                          const std::filesystem::path& path) {
    detail::write_file(path, serialize_dataset(ds));
}

inline CalibrationDataset read_dataset(const std::filesystem::path& path) {
    return parse_dataset(detail::read_file(path), path.filename().string());
}

// ---- params JSON ----------------------------------------------------------

struct ParamsEntry {
    int layer = -1;   // -1 for per-layer/global scopes where unset
    int head = -1;
    HeadParams params;
    double kl_nats = 0.0;
};

struct ParamsFile {
    int n = 0;
    std::string granularity;
    std::vector<ParamsEntry> entries;
};

inline nlohmann::ordered_json params_to_json(const ParamsFile& pf) {
    nlohmann::ordered_json j;
    j["n"] = pf.n;
    j["granularity"] = pf.granularity;
    j["entries"] = nlohmann::ordered_json::array();
    for (const auto& e : pf.entries) {
        nlohmann::ordered_json je;
        je["layer"] = e.layer;
        je["head"] = e.head;
        je["B"] = e.params.B;
        je["S"] = e.params.S;
        je["D_max"] = e.params.D_max;
        je["kl_nats"] = e.kl_nats;
        j["entries"].push_back(std::move(je));
    }
    return j;
}

inline ParamsFile params_from_json(const nlohmann::json& j,
                                   const std::string& what = "params") {
    ParamsFile pf;
    try {
        pf.n = j.at("n").get<int>();
        pf.granularity = j.at("granularity").get<std::string>();
        if (pf.n < 1) throw ParseError(what + ": schema violation: n >= 1");
        for (const auto& je : j.at("entries")) {
            ParamsEntry e;
            e.layer = je.at("layer").get<int>();
            e.head = je.at("head").get<int>();
            const int b = je.at("B").get<int>();
            const int s = je.at("S").get<int>();
            const int d = je.at("D_max").get<int>();
            e.kl_nats = je.value("kl_nats", 0.0);
            if (d > 127) throw ParseError(what + ": schema violation: D_max <= 127");
            if (d < 1) throw ParseError(what + ": schema violation: D_max >= 1");
            if (b < 1 || b > 32767)
                throw ParseError(what + ": schema violation: 0 < B <= 32767");
            if (s < 0 || s > 32767)
                throw ParseError(what + ": schema violation: 0 <= S <= 32767");
            e.params.B = static_cast<std::int16_t>(b);
            e.params.S = static_cast<std::int16_t>(s);
            e.params.D_max = static_cast<std::uint8_t>(d);
            pf.entries.push_back(e);
        }
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(what + ": schema violation: " + ex.what());
    }
    return pf;
}

inline void write_params(const ParamsFile& pf,
                         const std::filesystem::path& path) {
    detail::write_file(path, params_to_json(pf).dump(2) + "\n");
}

inline ParamsFile read_params(const std::filesystem::path& path) {
    const std::string text = detail::read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(path.filename().string() + ": " + ex.what());
    }
    return params_from_json(j, path.filename().string());
}

// ---- fidelity report JSON ---------------------------------------------------

struct FidelityHead {
    int layer = 0;
    int head = 0;
    std::size_t rows = 0;
    double mean_kl_nats = 0.0;
    double mean_entropy_softmax = 0.0;
    double mean_entropy_hccs = 0.0;
    std::string label;  // "broad" | "focused"
};

struct FidelityReport {
    int n = 0;
    std::string mode;
    std::vector<FidelityHead> heads;
};

inline nlohmann::ordered_json fidelity_to_json(const FidelityReport& fr) {
    nlohmann::ordered_json j;
    j["n"] = fr.n;
    j["mode"] = fr.mode;
    j["heads"] = nlohmann::ordered_json::array();
    for (const auto& h : fr.heads) {
        nlohmann::ordered_json jh;
        jh["layer"] = h.layer;
        jh["head"] = h.head;
        jh["rows"] = h.rows;
        jh["mean_kl_nats"] = h.mean_kl_nats;
        jh["mean_entropy_softmax"] = h.mean_entropy_softmax;
        jh["mean_entropy_hccs"] = h.mean_entropy_hccs;
        jh["label"] = h.label;
        j["heads"].push_back(std::move(jh));
    }
    return j;
}

inline void write_fidelity(const FidelityReport& fr,
                           const std::filesystem::path& path) {
    detail::write_file(path, fidelity_to_json(fr).dump(2) + "\n");
}

// ---- curves CSV -------------------------------------------------------------

struct CurvePoint {
    int rank = 0;
    int head_id = 0;
    double softmax_prob = 0.0;
    double hccs_prob = 0.0;
};

inline constexpr const char* kCurvesHeader = "rank,head_id,softmax_prob,hccs_prob";

inline void write_curves(std::span<const CurvePoint> points,
                         const std::filesystem::path& path) {
    std::ostringstream ss;
    ss << kCurvesHeader << "\n";
    ss.precision(17);
    for (const auto& p : points)
        ss << p.rank << ',' << p.head_id << ',' << p.softmax_prob << ','
           << p.hccs_prob << "\n";
    detail::write_file(path, std::move(ss).str());
}

inline std::vector<CurvePoint> read_curves(const std::filesystem::path& path) {
    const std::string text = detail::read_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCurvesHeader)
        throw ParseError(path.filename().string() + ": bad CSV header");
    std::vector<CurvePoint> points;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        CurvePoint p;
        char c1, c2, c3;
        std::istringstream ls(line);
        if (!(ls >> p.rank >> c1 >> p.head_id >> c2 >> p.softmax_prob >> c3 >>
              p.hccs_prob) ||
            c1 != ',' || c2 != ',' || c3 != ',')
            throw ParseError(path.filename().string() + ": bad CSV row: " + line);
        points.push_back(p);
    }
    return points;
}

// ---- probability tile binary ------------------------------------------------
//
// magic "HCCP" | version u16 | mode u8 | out_shift u8 | n u16 | rows u32
// per row: head_id u16 | Z i32 | rho i32 | n values (u16 in i16 modes, u8 in u8)

inline constexpr char kProbMagic[4] = {'H', 'C', 'C', 'P'};

inline std::string serialize_prob_tile(const ProbTile& tile) {
    std::string out;
    out.append(kProbMagic, 4);
    detail::put_u16(out, 1);
    out.push_back(static_cast<char>(tile.mode.kind));
    out.push_back(static_cast<char>(tile.mode.out_shift));
    detail::put_u16(out, tile.n);
    detail::put_u32(out, static_cast<std::uint32_t>(tile.rows()));
    const bool u8 = tile.mode.is_u8();
    for (std::size_t r = 0; r < tile.rows(); ++r) {
        detail::put_u16(out, tile.head_ids[r]);
        detail::put_u32(out, static_cast<std::uint32_t>(tile.Z[r]));
        detail::put_u32(out, static_cast<std::uint32_t>(tile.rho[r]));
        for (std::uint16_t v : tile.row(r)) {
            if (u8)
                out.push_back(static_cast<char>(v & 0xff));
            else
                detail::put_u16(out, v);
        }
    }
    return out;
}

inline ProbTile parse_prob_tile(const std::string& bytes,
                                const std::string& what = "probs") {
    detail::Reader r(bytes, what);
    if (std::memcmp(r.take(4), kProbMagic, 4) != 0)
        throw ParseError(what + ": bad magic at offset 0");
    if (r.u16() != 1) throw ParseError(what + ": unsupported version");
    ProbTile tile;
    const std::uint8_t kind = static_cast<std::uint8_t>(*r.take(1));
    if (kind > 3) throw ParseError(what + ": bad mode");
    tile.mode.kind = static_cast<OutputMode::Kind>(kind);
    tile.mode.out_shift = static_cast<std::uint8_t>(*r.take(1));
    tile.n = r.u16();
    const std::uint32_t rows = r.u32();
    tile.head_ids.resize(rows);
    tile.Z.resize(rows);
    tile.rho.resize(rows);
    tile.values.resize(static_cast<std::size_t>(rows) * tile.n);
    const bool u8 = tile.mode.is_u8();
    for (std::uint32_t i = 0; i < rows; ++i) {
        tile.head_ids[i] = r.u16();
        tile.Z[i] = static_cast<std::int32_t>(r.u32());
        tile.rho[i] = static_cast<std::int32_t>(r.u32());
        for (std::uint16_t c = 0; c < tile.n; ++c) {
            std::uint16_t v;
            if (u8)
                v = static_cast<std::uint8_t>(*r.take(1));
            else
                v = r.u16();
            tile.values[static_cast<std::size_t>(i) * tile.n + c] = v;
        }
    }
    if (r.offset() != bytes.size())
        throw ParseError(what + ": trailing bytes at offset " +
                         std::to_string(r.offset()));
    return tile;
}

inline void write_prob_tile(const ProbTile& tile,
                            const std::filesystem::path& path) {
    detail::write_file(path, serialize_prob_tile(tile));
}

inline ProbTile read_prob_tile(const std::filesystem::path& path) {
    return parse_prob_tile(detail::read_file(path), path.filename().string());
}

}  // namespace hccs::data
