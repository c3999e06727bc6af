// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "deepbeam/errors.hpp"
#include "deepbeam/phased_array.hpp"
#include "deepbeam/rng.hpp"

#include <cmath>
#include <set>
#include <sstream>

using namespace deepbeam;
using phy::cplx;

namespace {

const phy::ArrayGeometry kGeom;      // 12 elements, lambda/2
const phy::PhaseQuantizer kQuant;    // 4 levels

std::vector<double> fine_grid() {
    std::vector<double> grid;
    for (double t = -90.0; t <= 90.0 + 1e-9; t += 0.1) grid.push_back(t);
    return grid;
}

// Brute-force oracle: argmax of |AF| and its magnitude over the 0.1-degree grid.
std::pair<double, double> grid_peak(const phy::BeamWeights& beam) {
    double best_mag = -1.0, best_arg = 0.0;
    for (double t : fine_grid()) {
        const double m = std::abs(phy::array_factor(beam, kGeom, t));
        if (m > best_mag) {
            best_mag = m;
            best_arg = t;
        }
    }
    return {best_arg, best_mag};
}

// Oracle for the quantizer: nearest level by circular distance, ties low.
double quantize_oracle(double phase_rad, int levels) {
    const double width = 2.0 * M_PI / levels;
    double best = 0.0, best_dist = 1e9;
    for (int k = 0; k < levels; ++k) {
        const double level = k * width;
        double dist = std::abs(std::remainder(phase_rad - level, 2.0 * M_PI));
        if (dist < best_dist - 1e-12) {
            best_dist = dist;
            best = level;
        }
    }
    return best;
}

} // namespace

TEST_CASE("steering vector closed forms") {
    const auto boresight = phy::steering_vector(kGeom, 0.0);
    REQUIRE(boresight.weights.size() == 12);
    for (const auto& w : boresight.weights) {
        CHECK(w.real() == doctest::Approx(1.0));
        CHECK(w.imag() == doctest::Approx(0.0));
    }

    const auto steered = phy::steering_vector(kGeom, 30.0);
    CHECK(std::arg(steered.weights[1]) == doctest::Approx(-M_PI / 2.0).epsilon(1e-12));

    CHECK_THROWS_AS(phy::steering_vector(kGeom, 90.5), std::domain_error);
    CHECK_THROWS_AS(phy::steering_vector(kGeom, -91.0), std::domain_error);
}

TEST_CASE("steering vector peak location matches grid oracle") {
    for (double theta0 : {-45.0, 0.0, 45.0}) {
        const auto [arg, mag] = grid_peak(phy::steering_vector(kGeom, theta0));
        CHECK(std::abs(arg - theta0) <= 0.1 + 1e-9);
        CHECK(mag == doctest::Approx(12.0).epsilon(1e-9));
    }
}

TEST_CASE("unit magnitudes for every generated beam") {
    for (auto kind : {phy::CodebookKind::Azimuth24, phy::CodebookKind::AzimuthElevation12,
                      phy::CodebookKind::Digital5}) {
        const auto cb = phy::make_codebook(kind, kGeom, kQuant);
        for (const auto& beam : cb.beams) {
            for (const auto& w : beam.weights) CHECK(std::abs(std::abs(w) - 1.0) < 1e-15);
        }
    }
}

TEST_CASE("quantize snaps to nearest level with low tie-break") {
    phy::BeamWeights bw;
    bw.weights = {std::polar(1.0, 100.0 * M_PI / 180.0)};
    auto q = phy::quantize(bw, kQuant);
    CHECK(std::arg(q.weights[0]) == doctest::Approx(M_PI / 2.0).epsilon(1e-12));

    bw.weights = {std::polar(1.0, 45.0 * M_PI / 180.0)};
    q = phy::quantize(bw, kQuant);
    CHECK(std::arg(q.weights[0]) == doctest::Approx(0.0));

    SUBCASE("exhaustive sweep against the oracle") {
        for (double deg = 0.0; deg < 360.0; deg += 0.1) {
            phy::BeamWeights in;
            in.weights = {std::polar(1.0, deg * M_PI / 180.0)};
            const auto out = phy::quantize(in, kQuant);
            double got = std::arg(out.weights[0]);
            if (got < 0) got += 2.0 * M_PI;
            const double want = quantize_oracle(deg * M_PI / 180.0, kQuant.num_levels);
            // midpoints (45, 135, ...) must go to the lower level
            const bool midpoint = std::abs(std::remainder(deg - 45.0, 90.0)) < 1e-9;
            if (midpoint) {
                const double lower = std::floor(deg / 90.0) * M_PI / 2.0;
                CHECK(got == doctest::Approx(lower).epsilon(1e-9));
            } else {
                CHECK(got == doctest::Approx(want).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("quantize is idempotent and keeps magnitudes") {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        phy::BeamWeights bw;
        for (int n = 0; n < 12; ++n) bw.weights.push_back(std::polar(1.0, rng.uniform(0, 2 * M_PI)));
        const auto once = phy::quantize(bw, kQuant);
        const auto twice = phy::quantize(once, kQuant);
        REQUIRE(once.weights.size() == twice.weights.size());
        for (std::size_t i = 0; i < once.weights.size(); ++i) {
            CHECK(once.weights[i].real() == twice.weights[i].real());
            CHECK(once.weights[i].imag() == twice.weights[i].imag());
            CHECK(std::abs(std::abs(once.weights[i]) - 1.0) < 1e-15);
        }
    }
}

TEST_CASE("array factor closed forms and linearity") {
    phy::BeamWeights ones;
    ones.weights.assign(12, cplx{1.0, 0.0});
    const cplx af0 = phy::array_factor(ones, kGeom, 0.0);
    CHECK(af0.real() == doctest::Approx(12.0));
    CHECK(af0.imag() == doctest::Approx(0.0));

    for (double theta0 : {-37.0, 12.5, 60.0}) {
        const auto sv = phy::steering_vector(kGeom, theta0);
        CHECK(std::abs(phy::array_factor(sv, kGeom, theta0)) ==
              doctest::Approx(12.0).epsilon(1e-9));
    }

    SUBCASE("linear in the weights") {
        Rng rng(7);
        for (int trial = 0; trial < 20; ++trial) {
            phy::BeamWeights w1, w2, sum;
            const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
            for (int n = 0; n < 12; ++n) {
                const cplx u{rng.uniform(-1, 1), rng.uniform(-1, 1)};
                const cplx v{rng.uniform(-1, 1), rng.uniform(-1, 1)};
                w1.weights.push_back(u);
                w2.weights.push_back(v);
                sum.weights.push_back(a * u + b * v);
            }
            const double theta = rng.uniform(-90, 90);
            const cplx lhs = phy::array_factor(sum, kGeom, theta);
            const cplx rhs = a * phy::array_factor(w1, kGeom, theta) +
                             b * phy::array_factor(w2, kGeom, theta);
            CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
        }
    }

    SUBCASE("weight length mismatch") {
        phy::BeamWeights bad;
        bad.weights.assign(5, cplx{1.0, 0.0});
        CHECK_THROWS_AS(phy::array_factor(bad, kGeom, 0.0), UsageError);
    }
}

TEST_CASE("beam pattern basics") {
    phy::ArrayGeometry single;
    single.num_elements = 1;
    phy::BeamWeights w;
    w.weights = {std::polar(1.0, 0.7)};
    const auto pattern = phy::beam_pattern(w, single, {-60.0, 0.0, 30.0, 88.0});
    for (const auto& [angle, db] : pattern) CHECK(db == doctest::Approx(0.0).epsilon(1e-12));

    CHECK_THROWS_AS(phy::beam_pattern(w, single, {}), UsageError);
}

TEST_CASE("quantized codebook patterns match the grid oracle") {
    const auto cb = phy::make_codebook(phy::CodebookKind::Azimuth24, kGeom, kQuant);

    SUBCASE("beam 0 peaks near its design angle") {
        const auto [arg, mag] = grid_peak(cb.beams[0]);
        CHECK(std::abs(arg - cb.beams[0].design_angle_deg) <= 5.0);
    }

    SUBCASE("all beams peak within 5 degrees of design (2-bit quantization)") {
        for (const auto& beam : cb.beams) {
            const auto [arg, mag] = grid_peak(beam);
            CHECK(std::abs(arg - beam.design_angle_deg) <= 5.0);
        }
    }

    SUBCASE("boresight-steered beam sidelobe margin (grid oracle, frozen)") {
        const auto beam = phy::quantize(phy::steering_vector(kGeom, 0.0), kQuant);
        const auto [main_arg, main_mag] = grid_peak(beam);
        double sidelobe = 0.0;
        for (double t : fine_grid()) {
            if (std::abs(t - main_arg) < 12.0) continue;
            sidelobe = std::max(sidelobe, std::abs(phy::array_factor(beam, kGeom, t)));
        }
        const double margin_db = 20.0 * std::log10(main_mag / sidelobe);
        // uniform 12-element array: first sidelobe 13.06 dB below the main lobe
        CHECK(margin_db == doctest::Approx(13.06).epsilon(0.01));
        CHECK(margin_db > 12.0);
    }

    SUBCASE("beams 11 and 12 mirror about boresight within 0.5 dB") {
        const auto& b11 = cb.beams[11];
        const auto& b12 = cb.beams[12];
        CHECK(b11.design_angle_deg == doctest::Approx(-b12.design_angle_deg));
        for (double t = -90.0; t <= 90.0; t += 0.25) {
            const double p11 = 20.0 * std::log10(std::abs(phy::array_factor(b11, kGeom, t)) + 1e-12);
            const double p12 =
                20.0 * std::log10(std::abs(phy::array_factor(b12, kGeom, -t)) + 1e-12);
            if (p11 > -40.0 || p12 > -40.0) CHECK(std::abs(p11 - p12) <= 0.5);
        }
    }
}

TEST_CASE("codebook construction") {
    const auto cb24 = phy::make_codebook(phy::CodebookKind::Azimuth24, kGeom, kQuant);
    REQUIRE(cb24.size() == 24);
    for (int i = 0; i < 24; ++i) CHECK(cb24.beams[i].beam_id == i);
    for (int i = 1; i < 24; ++i)
        CHECK(cb24.beams[i].design_angle_deg > cb24.beams[i - 1].design_angle_deg);
    CHECK(cb24.beams.front().design_angle_deg == doctest::Approx(-60.0));
    CHECK(cb24.beams.back().design_angle_deg == doctest::Approx(60.0));

    const auto cb5 = phy::make_codebook(phy::CodebookKind::Digital5, kGeom, kQuant);
    REQUIRE(cb5.size() == 5);
    int changed_by_quantizer = 0;
    for (const auto& beam : cb5.beams) {
        const auto q = phy::quantize(beam, kQuant);
        for (std::size_t n = 0; n < beam.weights.size(); ++n) {
            if (std::abs(q.weights[n] - beam.weights[n]) > 1e-9) {
                ++changed_by_quantizer;
                break;
            }
        }
    }
    CHECK(changed_by_quantizer == 4); // all but the boresight beam carry continuous phases

    const auto cb12 = phy::make_codebook(phy::CodebookKind::AzimuthElevation12, kGeom, kQuant);
    REQUIRE(cb12.size() == 12);
    for (int i = 0; i < 6; ++i) {
        CHECK(cb12.beams[i].elevation_gain_db == 0.0);
        CHECK(cb12.beams[i + 6].elevation_gain_db == -4.0);
        CHECK(cb12.beams[i].design_angle_deg ==
              doctest::Approx(cb12.beams[i + 6].design_angle_deg));
    }

    SUBCASE("deterministic bit for bit") {
        const auto again = phy::make_codebook(phy::CodebookKind::Azimuth24, kGeom, kQuant);
        for (int i = 0; i < 24; ++i) {
            for (int n = 0; n < 12; ++n) {
                CHECK(again.beams[i].weights[n].real() == cb24.beams[i].weights[n].real());
                CHECK(again.beams[i].weights[n].imag() == cb24.beams[i].weights[n].imag());
            }
        }
    }

    SUBCASE("all quantized beams are pairwise distinct") {
        std::set<std::vector<double>> signatures;
        for (const auto& beam : cb24.beams) {
            std::vector<double> key;
            for (const auto& w : beam.weights) {
                key.push_back(w.real());
                key.push_back(w.imag());
            }
            signatures.insert(key);
        }
        CHECK(signatures.size() == 24);
    }

    CHECK_THROWS_AS(phy::codebook_kind_from_string("hexagon-7"), UsageError);
}

TEST_CASE("codebook text round trip") {
    const auto cb = phy::make_codebook(phy::CodebookKind::AzimuthElevation12, kGeom, kQuant);
    std::stringstream ss;
    phy::save_codebook(ss, cb);
    const auto loaded = phy::load_codebook(ss);
    REQUIRE(loaded.size() == cb.size());
    CHECK(loaded.kind == cb.kind);
    for (std::size_t i = 0; i < cb.size(); ++i) {
        CHECK(loaded.beams[i].beam_id == cb.beams[i].beam_id);
        CHECK(loaded.beams[i].design_angle_deg ==
              doctest::Approx(cb.beams[i].design_angle_deg).epsilon(1e-12));
        CHECK(loaded.beams[i].elevation_gain_db == cb.beams[i].elevation_gain_db);
        for (std::size_t n = 0; n < 12; ++n)
            CHECK(std::abs(loaded.beams[i].weights[n] - cb.beams[i].weights[n]) < 1e-12);
    }

    SUBCASE("second save is byte-identical") {
        std::stringstream first, second;
        phy::save_codebook(first, cb);
        phy::save_codebook(second, loaded);
        CHECK(first.str() == second.str());
    }

    SUBCASE("truncated file fails cleanly") {
        std::stringstream bad(ss.str().substr(0, 90));
        CHECK_THROWS_AS(phy::load_codebook(bad), FormatError);
    }
}
