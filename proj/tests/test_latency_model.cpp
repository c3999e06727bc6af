// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "deepbeam/errors.hpp"
#include "deepbeam/latency_model.hpp"

using namespace deepbeam;
using latency::Rational;

namespace {
const latency::NrConfig kCfg;          // numerology 3 defaults
const latency::SweepScenario kSweep;   // 12 x 12
const latency::DeepBeamTiming kTiming; // stage 492 us, flush 340 us, J=1, xi=512
} // namespace

TEST_CASE("decimal parsing and printing round trips") {
    CHECK(latency::rational_from_decimal("8.91875") == Rational(1427, 160));
    CHECK(latency::rational_from_decimal("125") == Rational(125));
    CHECK(latency::rational_from_decimal("-0.25") == Rational(-1, 4));
    CHECK(latency::rational_from_decimal("1.76e9") == Rational(1760000000));
    CHECK(latency::rational_from_decimal("13e-6") == Rational(13, 1000000));
    CHECK(latency::decimal_from_rational(Rational(1427, 160)) == "8.91875");
    CHECK(latency::decimal_from_rational(Rational(-3, 8)) == "-0.375");
    CHECK(latency::decimal_from_rational(Rational(42)) == "42");
    CHECK_THROWS_AS(latency::rational_from_decimal("abc"), UsageError);
    CHECK_THROWS_AS(latency::rational_from_decimal(""), UsageError);
}

TEST_CASE("final-burst duration branches") {
    // N=16, even branch: 8 * 125 - 2 * 8.91875 = 982.1625 us
    CHECK(latency::decimal_from_rational(latency::t_hat_ebs(16, kCfg)) == "982.1625");
    CHECK(latency::t_hat_ebs(2, kCfg) == kCfg.t_slot_us - Rational(2) * kCfg.t_sym_us);
    CHECK(latency::t_hat_ebs(3, kCfg) == kCfg.t_slot_us + Rational(6) * kCfg.t_sym_us);
    CHECK_THROWS_AS(latency::t_hat_ebs(0, kCfg), UsageError);

    SUBCASE("strictly increasing in the SSB count") {
        for (int n = 1; n < 128; ++n)
            CHECK(latency::t_hat_ebs(n + 1, kCfg) > latency::t_hat_ebs(n, kCfg));
    }
}

TEST_CASE("exhaustive sweep duration") {
    latency::NrConfig cfg = kCfg;

    cfg.t_ss_us = Rational(20000);
    CHECK(latency::decimal_from_rational(latency::t_ebs(kSweep, cfg)) == "40982.1625");
    cfg.t_ss_us = Rational(5000);
    CHECK(latency::decimal_from_rational(latency::t_ebs(kSweep, cfg)) == "10982.1625");

    SUBCASE("single-burst boundary: 64 pairs need no full burst wait") {
        latency::SweepScenario sc{8, 8};
        CHECK(latency::t_ebs(sc, cfg) == latency::t_hat_ebs(64, cfg));
    }

    SUBCASE("monotone in the pair count and burst period") {
        Rational prev(0);
        for (int m = 1; m <= 30; ++m) {
            const auto t = latency::t_ebs({12, m}, cfg);
            CHECK(t >= prev);
            prev = t;
        }
        latency::NrConfig c2 = cfg;
        c2.t_ss_us = Rational(40000);
        CHECK(latency::t_ebs(kSweep, c2) >= latency::t_ebs(kSweep, cfg));
    }
}

TEST_CASE("eavesdropping symbol count") {
    CHECK(latency::symbols_to_eavesdrop(512, 3300) == 1);
    CHECK(latency::symbols_to_eavesdrop(3300, 3300) == 1);
    CHECK(latency::symbols_to_eavesdrop(3301, 3300) == 2);
    CHECK(latency::symbols_to_eavesdrop(2048 * 5, 3300) == 4);
}

TEST_CASE("collection time") {
    // J=1, E=1, N=12: 12 symbols
    const auto t1 = latency::t_db_data(1, 1, 12, kCfg);
    CHECK(t1 == Rational(12) * kCfg.t_sym_us);
    CHECK(latency::to_double(t1) == doctest::Approx(107.025).epsilon(1e-9)); // us
    const auto t14 = latency::t_db_data(14, 1, 12, kCfg);
    CHECK(t14 == Rational(14 * 12) * kCfg.t_sym_us);
    CHECK(latency::to_double(t14) == doctest::Approx(1498.35).epsilon(1e-9));
    // max{} is symmetric in J and E
    CHECK(latency::t_db_data(3, 9, 12, kCfg) == latency::t_db_data(9, 3, 12, kCfg));
}

TEST_CASE("published sweep-latency bars, exact") {
    // EBS bars
    latency::NrConfig cfg = kCfg;
    const char* ebs_expect[] = {"10.9821625", "20.9821625", "40.9821625", "80.9821625"};
    const int ss_ms[] = {5, 10, 20, 40};
    for (int i = 0; i < 4; ++i) {
        cfg.t_ss_us = Rational(ss_ms[i] * 1000);
        CHECK(latency::decimal_from_rational(latency::t_ebs(kSweep, cfg) / Rational(1000)) ==
              ebs_expect[i]);
    }
    // the three scheduler allocations; E = ceil(512/3300) = 1
    CHECK(latency::decimal_from_rational(latency::t_db(1, 1, 12, kTiming, kCfg)) == "5760.91875");
    CHECK(latency::decimal_from_rational(latency::t_db(4, 1, 12, kTiming, kCfg)) == "5787.675");
    CHECK(latency::decimal_from_rational(latency::t_db(14, 1, 12, kTiming, kCfg)) == "5876.8625");
}

TEST_CASE("speedup ratios") {
    latency::NrConfig cfg = kCfg;
    latency::DeepBeamTiming tm = kTiming;

    cfg.t_ss_us = Rational(20000);
    tm.symbols_per_user = 1;
    CHECK(latency::speedup(kSweep, cfg, tm) == doctest::Approx(7.11).epsilon(0.0015));

    cfg.t_ss_us = Rational(40000);
    CHECK(latency::speedup(kSweep, cfg, tm) == doctest::Approx(14.05).epsilon(0.0008));

    cfg.t_ss_us = Rational(5000);
    tm.symbols_per_user = 14;
    CHECK(latency::speedup(kSweep, cfg, tm) == doctest::Approx(1.87).epsilon(0.006));
}

TEST_CASE("t_db monotonicity") {
    latency::DeepBeamTiming tm = kTiming;
    Rational prev(0);
    for (int j = 1; j <= 80; ++j) {
        const auto t = latency::t_db(j, 1, 12, tm, kCfg);
        CHECK(t >= prev);
        prev = t;
    }
    prev = Rational(0);
    for (int e = 1; e <= 80; ++e) {
        const auto t = latency::t_db(1, e, 12, tm, kCfg);
        CHECK(t >= prev);
        prev = t;
    }
    prev = Rational(0);
    for (int n = 1; n <= 64; ++n) {
        const auto t = latency::t_db(1, 1, n, tm, kCfg);
        CHECK(t >= prev);
        prev = t;
    }
    latency::DeepBeamTiming slower = kTiming;
    slower.t_pipeline_stage_us = tm.t_pipeline_stage_us + Rational(100);
    CHECK(latency::t_db(1, 1, 12, slower, kCfg) > latency::t_db(1, 1, 12, tm, kCfg));
    slower = kTiming;
    slower.t_pipeline_flush_us = tm.t_pipeline_flush_us + Rational(100);
    CHECK(latency::t_db(1, 1, 12, slower, kCfg) > latency::t_db(1, 1, 12, tm, kCfg));
}

TEST_CASE("sample budgets over 802.11ad interframe gaps") {
    const auto rate = latency::rational_from_decimal("1.76e9");
    CHECK(latency::samples_in_interval(rate, latency::rational_from_decimal("13e-6")) == 22880);
    CHECK(latency::samples_in_interval(rate, latency::rational_from_decimal("3e-6")) == 5280);
    CHECK(latency::samples_in_interval(rate, Rational(0)) == 0);
    CHECK(latency::samples_in_interval(latency::rational_from_decimal("999e3"), Rational(0)) == 0);
    // floor, not round
    CHECK(latency::samples_in_interval(Rational(3), Rational(1, 2)) == 1);
}

TEST_CASE("config validation") {
    latency::NrConfig cfg = kCfg;
    cfg.t_slot_us = Rational(250); // inconsistent with 14 symbols of 8.91875 us
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    cfg = kCfg;
    cfg.n_ss_per_burst = 0;
    CHECK_THROWS_AS(cfg.validate(), UsageError);

    latency::DeepBeamTiming tm = kTiming;
    tm.symbols_per_user = 0;
    CHECK_THROWS_AS(tm.validate(), UsageError);
}
