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
#include <algorithm>
#include <numeric>
#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "golden_fixtures.hpp"
#include "hccs/kernel.hpp"
#include "hccs/oracle.hpp"
#include "test_util.hpp"

using namespace hccs;

namespace {

LogitRow make_row(std::initializer_list<int> vals) {
    LogitRow row;
    for (int v : vals) row.x.push_back(static_cast<std::int8_t>(v));
    return row;
}

const HeadParams kWorked{golden::kWorkedB, golden::kWorkedS,
                         golden::kWorkedDmax};

}  // namespace

TEST_CASE("row_max basics") {
    REQUIRE(row_max(make_row({3, -5, 7}).x) == 7);
    REQUIRE(row_max(make_row({-128, -128}).x) == -128);
    REQUIRE_THROWS_WITH(row_max(std::span<const std::int8_t>{}), "empty row");
}

TEST_CASE("row_max matches scalar scan on random rows") {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        auto row = test::random_row(rng, 64);
        REQUIRE(row_max(row.x) == *std::max_element(row.x.begin(), row.x.end()));
    }
}

TEST_CASE("clamped_distances") {
    auto one = [](int m, int x, int d_max) {
        std::int8_t xi = static_cast<std::int8_t>(x);
        std::uint8_t out;
        clamped_distances({&xi, 1}, static_cast<std::int8_t>(m),
                          static_cast<std::uint8_t>(d_max), {&out, 1});
        return out;
    };
    REQUIRE(one(7, -5, 10) == 10);
    REQUIRE(one(7, 7, 25) == 0);
    REQUIRE(one(7, 7, 1) == 0);
    // raw difference 255 exceeds uint8 before the clamp
    REQUIRE(one(127, -128, 127) == 127);

    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        auto row = test::random_row(rng, 32);
        const std::int8_t m = row_max(row.x);
        const std::uint8_t d_max = static_cast<std::uint8_t>(1 + rng() % 127);
        std::vector<std::uint8_t> delta(row.x.size());
        clamped_distances(row.x, m, d_max, delta);
        for (std::size_t i = 0; i < delta.size(); ++i) {
            REQUIRE(delta[i] <= d_max);
            const int raw = static_cast<int>(m) - static_cast<int>(row.x[i]);
            REQUIRE(delta[i] == std::min(raw, static_cast<int>(d_max)));
        }
    }
}

TEST_CASE("affine_scores") {
    {
        std::uint8_t d = 10;
        std::int16_t s;
        affine_scores({&d, 1}, HeadParams{100, 3, 20}, {&s, 1});
        REQUIRE(s == 70);
    }
    {
        std::vector<std::uint8_t> delta{0, 2, 5, 25};
        std::vector<std::int16_t> s(4);
        affine_scores(delta, kWorked, s);
        REQUIRE(s == std::vector<std::int16_t>{500, 468, 420, 100});
    }
    {
        std::vector<std::uint8_t> delta{0, 3, 9};
        std::vector<std::int16_t> s(3);
        affine_scores(delta, HeadParams{77, 0, 127}, s);
        REQUIRE(s == std::vector<std::int16_t>{77, 77, 77});
    }
    std::vector<std::uint8_t> delta{0};
    std::vector<std::int16_t> s(1);
    // B - S*D_max < 0
    REQUIRE_THROWS_WITH(affine_scores(delta, HeadParams{100, 3, 120}, s),
                        "infeasible params");
    REQUIRE_THROWS_WITH(affine_scores(delta, HeadParams{0, 1, 10}, s),
                        "infeasible params");
}

TEST_CASE("row_sum") {
    std::vector<std::int16_t> s{500, 468, 420, 100};
    REQUIRE(row_sum(s) == 1488);
    std::vector<std::int16_t> constant(64, 500);
    REQUIRE(row_sum(constant) == 64 * 500);
}

TEST_CASE("reciprocal_q0") {
    REQUIRE(reciprocal_q0(1000, kI16Scale) == 32);
    REQUIRE(reciprocal_q0(32767, kI16Scale) == 1);
    REQUIRE(reciprocal_q0(1488, kI16Scale) == 22);
    REQUIRE_THROWS_WITH(reciprocal_q0(0, kI16Scale), "degenerate row sum");
}

TEST_CASE("reciprocal_u8") {
    REQUIRE(reciprocal_u8(256) == 32640);
    REQUIRE(reciprocal_u8(8355840) == 1);
    REQUIRE(reciprocal_u8(1488) == 5615);
    REQUIRE_THROWS_WITH(reciprocal_u8(255), "row sum below int8-path floor");
}

TEST_CASE("reciprocal_clb") {
    REQUIRE(reciprocal_clb(1024, kI16Scale) == 31);
    REQUIRE(reciprocal_clb(1488, kI16Scale) == 31);  // k = 10
    REQUIRE(reciprocal_clb(1, kI16Scale) == 32767);
    REQUIRE_THROWS_WITH(reciprocal_clb(0, kI16Scale), "degenerate row sum");

    // overestimates T/Z by less than 2x (up to the floor)
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::int32_t z = 1 + static_cast<std::int32_t>(rng() % 32767);
        const double rho = static_cast<double>(reciprocal_clb(z, kI16Scale));
        const double ratio = (rho + 1.0) * z / kI16Scale;  // +1 absorbs floor
        REQUIRE(ratio > 1.0);
        REQUIRE(rho * z / static_cast<double>(kI16Scale) < 2.0);
    }
}

TEST_CASE("normalize worked example") {
    std::vector<std::int16_t> s{500, 468, 420, 100};
    std::vector<std::uint16_t> p(4);
    normalize(s, golden::kWorkedRhoI16, OutputMode::i16_div(), p);
    REQUIRE(p == golden::kWorkedI16);
    REQUIRE(std::accumulate(p.begin(), p.end(), 0) == 32736);

    normalize(s, golden::kWorkedRhoU8, OutputMode::u8_div(), p);
    REQUIRE(p == golden::kWorkedU8);
    REQUIRE(std::accumulate(p.begin(), p.end(), 0) == 253);
}

TEST_CASE("hccs_row worked example") {
    LogitRow row;
    row.x = golden::kWorkedRow;
    const auto i16 = hccs_row(row, kWorked, OutputMode::i16_div());
    REQUIRE(i16.p == golden::kWorkedI16);
    REQUIRE(i16.Z == golden::kWorkedZ);
    REQUIRE(i16.rho == golden::kWorkedRhoI16);

    const auto u8 = hccs_row(row, kWorked, OutputMode::u8_div());
    REQUIRE(u8.p == golden::kWorkedU8);
    REQUIRE(u8.rho == golden::kWorkedRhoU8);
}

TEST_CASE("constant rows give uniform output") {
    for (auto mode : {OutputMode::i16_div(), OutputMode::i16_clb(),
                      OutputMode::u8_div(), OutputMode::u8_clb()}) {
        LogitRow row;
        row.x.assign(64, static_cast<std::int8_t>(-9));
        const auto out = hccs_row(row, calib::default_params(64), mode);
        for (std::uint16_t v : out.p) REQUIRE(v == out.p[0]);
    }
}

TEST_CASE("ordering preservation") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + rng() % 63;
        const auto row = test::random_row(rng, n);
        const auto hp = test::random_feasible_params(rng, static_cast<int>(n));
        const auto mode = test::random_mode(rng);
        const auto out = hccs_row(row, hp, mode);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (row.x[i] >= row.x[j])
                    REQUIRE(out.p[i] >= out.p[j]);
    }
}

TEST_CASE("i16_div row-sum bound") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 128;
        const auto row = test::random_row(rng, n);
        const auto hp = test::random_feasible_params(rng, static_cast<int>(n));
        const auto out = hccs_row(row, hp, OutputMode::i16_div());
        const std::int64_t sum =
            std::accumulate(out.p.begin(), out.p.end(), std::int64_t{0});
        REQUIRE(sum <= 32767);
        REQUIRE(sum > 32767 - out.Z);
    }
}

TEST_CASE("u8_div row-sum bound") {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 128;
        const auto row = test::random_row(rng, n);
        const auto hp = test::random_feasible_params(rng, static_cast<int>(n));
        const auto out = hccs_row(row, hp, OutputMode::u8_div());
        const std::int64_t sum =
            std::accumulate(out.p.begin(), out.p.end(), std::int64_t{0});
        REQUIRE(std::llabs(sum - 255) <= static_cast<std::int64_t>(n) + 1);
    }
}

TEST_CASE("shift invariance") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng() % 64;
        LogitRow row;
        row.x.resize(n);
        for (auto& v : row.x)
            v = static_cast<std::int8_t>(static_cast<int>(rng() % 101) - 50);
        const int c = static_cast<int>(rng() % 61) - 30;  // stays within int8
        LogitRow shifted = row;
        for (auto& v : shifted.x) v = static_cast<std::int8_t>(v + c);
        const auto hp = test::random_feasible_params(rng, static_cast<int>(n));
        const auto mode = test::random_mode(rng);
        const auto a = hccs_row(row, hp, mode);
        const auto b = hccs_row(shifted, hp, mode);
        REQUIRE(a.p == b.p);
        REQUIRE(a.Z == b.Z);
        REQUIRE(a.rho == b.rho);
    }
}

TEST_CASE("adversarial extremes match the wide oracle") {
    std::vector<LogitRow> rows;
    LogitRow all_lo, all_hi, alternating;
    all_lo.x.assign(128, static_cast<std::int8_t>(-128));
    all_hi.x.assign(128, static_cast<std::int8_t>(127));
    for (int i = 0; i < 128; ++i)
        alternating.x.push_back(static_cast<std::int8_t>(i % 2 ? 127 : -128));
    rows = {all_lo, all_hi, alternating};

    std::mt19937_64 rng(43);
    for (const auto& row : rows) {
        for (int trial = 0; trial < 50; ++trial) {
            const auto hp = test::random_feasible_params(rng, 128);
            const auto mode = test::random_mode(rng);
            const auto narrow = hccs_row(row, hp, mode);
            const auto wide = oracle::hccs_wide_oracle(row, hp, mode);
            REQUIRE(narrow.p == wide.p);
            REQUIRE(narrow.Z == wide.Z);
            REQUIRE(narrow.rho == wide.rho);
        }
    }
}

TEST_CASE("hccs_tile single row equals hccs_row") {
    std::mt19937_64 rng(47);
    const auto row = test::random_row(rng, 32, 5);
    LogitTile tile;
    tile.n = 32;
    tile.data = row.x;
    tile.head_ids = {5};
    const auto hp = test::random_feasible_params(rng, 32);
    ParamsTable table{{5, hp}};
    const auto out = hccs_tile(tile, table, OutputMode::i16_div());
    const auto ref = hccs_row(row, hp, OutputMode::i16_div());
    REQUIRE(std::vector<std::uint16_t>(out.row(0).begin(), out.row(0).end()) ==
            ref.p);
    REQUIRE(out.Z[0] == ref.Z);
    REQUIRE(out.rho[0] == ref.rho);
}

TEST_CASE("hccs_tile output independent of worker count") {
    std::mt19937_64 rng(53);
    LogitTile tile;
    tile.n = 64;
    tile.data.resize(64 * 64);
    for (auto& v : tile.data)
        v = static_cast<std::int8_t>(static_cast<std::uint8_t>(rng()));
    tile.head_ids.assign(64, 0);
    ParamsTable table{{0, test::random_feasible_params(rng, 64)}};
    for (auto mode : {OutputMode::i16_div(), OutputMode::u8_clb()}) {
        const auto w1 = hccs_tile(tile, table, mode, 1);
        const auto w8 = hccs_tile(tile, table, mode, 8);
        REQUIRE(w1.values == w8.values);
        REQUIRE(w1.Z == w8.Z);
        REQUIRE(w1.rho == w8.rho);
    }
}

TEST_CASE("hccs_tile routes per-row head params") {
    std::mt19937_64 rng(59);
    LogitTile tile;
    tile.n = 16;
    const std::size_t rows = 8;
    tile.data.resize(rows * tile.n);
    for (auto& v : tile.data)
        v = static_cast<std::int8_t>(static_cast<std::uint8_t>(rng()));
    for (std::size_t r = 0; r < rows; ++r)
        tile.head_ids.push_back(static_cast<std::uint16_t>(r % 2));
    ParamsTable table{{0, test::random_feasible_params(rng, 16)},
                      {1, test::random_feasible_params(rng, 16)}};
    const auto out = hccs_tile(tile, table, OutputMode::i16_div(), 3);
    for (std::size_t r = 0; r < rows; ++r) {
        LogitRow row;
        row.x.assign(tile.row(r).begin(), tile.row(r).end());
        const auto ref =
            hccs_row(row, table.at(tile.head_ids[r]), OutputMode::i16_div());
        REQUIRE(std::vector<std::uint16_t>(out.row(r).begin(),
                                           out.row(r).end()) == ref.p);
    }
}

TEST_CASE("hccs_tile rejects unknown heads") {
    LogitTile tile;
    tile.n = 4;
    tile.data = {1, 2, 3, 4};
    tile.head_ids = {9};
    ParamsTable table{{0, HeadParams{300, 4, 60}}};
    REQUIRE_THROWS_WITH(hccs_tile(tile, table, OutputMode::i16_div()),
                        "unknown head");
}

TEST_CASE("u8_clb saturates at 255") {
    // CLB overestimates rho; a dominant score must clip, not wrap.
    // s = [520, 145], Z = 665, k = 9, rho = 16320, raw p0 = 258.
    const auto row = make_row({100, -100});
    HeadParams hp{520, 15, 25};  // feasible for n=2
    REQUIRE(calib::validate_params(hp, 2).ok());
    const auto out = hccs_row(row, hp, OutputMode::u8_clb());
    REQUIRE(out.p[0] == 255);
    REQUIRE(out.p[1] == 72);
    const auto wide = oracle::hccs_wide_oracle(row, hp, OutputMode::u8_clb());
    REQUIRE(out.p == wide.p);
}
