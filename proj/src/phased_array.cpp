// SPDX-License-Identifier: Apache-2.0
#include "deepbeam/phased_array.hpp"

#include "deepbeam/errors.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace deepbeam::phy {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

double deg2rad(double deg) { return deg * (M_PI / 180.0); }
double rad2deg(double rad) { return rad * (180.0 / M_PI); }

// Elevation rows of the 12-beam codebook: boresight row and a lowered row.
constexpr int kElevationColumns = 6;
constexpr double kElevationRowGainDb[2] = {0.0, -4.0};

} // namespace

void ArrayGeometry::validate() const {
    if (num_elements < 1) throw UsageError("ArrayGeometry: num_elements must be >= 1");
    if (!(element_spacing > 0.0)) throw UsageError("ArrayGeometry: element_spacing must be > 0");
    if (!(carrier_freq > 0.0)) throw UsageError("ArrayGeometry: carrier_freq must be > 0");
}

void PhaseQuantizer::validate() const {
    if (num_levels < 1) throw UsageError("PhaseQuantizer: num_levels must be >= 1");
}

std::string to_string(CodebookKind kind) {
    switch (kind) {
        case CodebookKind::Azimuth24: return "azimuth-24";
        case CodebookKind::AzimuthElevation12: return "azimuth-elevation-12";
        case CodebookKind::Digital5: return "digital-5";
    }
    throw UsageError("unknown codebook kind");
}

CodebookKind codebook_kind_from_string(const std::string& name) {
    if (name == "azimuth-24") return CodebookKind::Azimuth24;
    if (name == "azimuth-elevation-12") return CodebookKind::AzimuthElevation12;
    if (name == "digital-5") return CodebookKind::Digital5;
    throw UsageError("unsupported codebook kind: " + name);
}

BeamWeights steering_vector(const ArrayGeometry& geometry, double angle_deg) {
    geometry.validate();
    if (!(angle_deg >= -90.0 && angle_deg <= 90.0))
        throw std::domain_error("steering_vector: angle must be in [-90, 90] degrees");

    BeamWeights bw;
    bw.design_angle_deg = angle_deg;
    bw.weights.resize(geometry.num_elements);
    const double k = kTwoPi * geometry.element_spacing * std::sin(deg2rad(angle_deg));
    for (int n = 0; n < geometry.num_elements; ++n) {
        bw.weights[n] = std::polar(1.0, -k * n);
    }
    return bw;
}

BeamWeights quantize(const BeamWeights& weights, const PhaseQuantizer& q) {
    q.validate();
    const double width = kTwoPi / q.num_levels;
    BeamWeights out = weights;
    for (auto& w : out.weights) {
        double phase = std::arg(w);
        if (phase < 0.0) phase += kTwoPi;
        // Nearest level; exact midpoint rounds toward the lower level.
        long long level = static_cast<long long>(std::ceil(phase / width - 0.5));
        level %= q.num_levels;
        if (level < 0) level += q.num_levels;
        w = std::polar(1.0, static_cast<double>(level) * width);
    }
    return out;
}

cplx array_factor(const BeamWeights& weights, const ArrayGeometry& geometry,
                  double angle_deg) {
    geometry.validate();
    if (static_cast<int>(weights.weights.size()) != geometry.num_elements)
        throw UsageError("array_factor: weight length does not match geometry");

    const double k = kTwoPi * geometry.element_spacing * std::sin(deg2rad(angle_deg));
    cplx af{0.0, 0.0};
    for (int n = 0; n < geometry.num_elements; ++n) {
        af += weights.weights[n] * std::polar(1.0, k * n);
    }
    return af;
}

std::vector<std::pair<double, double>> beam_pattern(const BeamWeights& weights,
                                                    const ArrayGeometry& geometry,
                                                    const std::vector<double>& grid_deg) {
    if (grid_deg.empty()) throw UsageError("beam_pattern: empty angle grid");
    std::vector<std::pair<double, double>> pattern;
    pattern.reserve(grid_deg.size());
    for (double theta : grid_deg) {
        const double mag = std::abs(array_factor(weights, geometry, theta));
        const double db = mag > 0.0 ? 20.0 * std::log10(mag) : -120.0;
        pattern.emplace_back(theta, std::max(db, -120.0));
    }
    return pattern;
}

Codebook make_codebook(CodebookKind kind, const ArrayGeometry& geometry,
                       const PhaseQuantizer& quantizer) {
    geometry.validate();
    quantizer.validate();

    auto fan = [](double lo, double hi, int count, int i) {
        return count == 1 ? (lo + hi) / 2.0 : lo + (hi - lo) * i / (count - 1);
    };

    Codebook cb;
    cb.kind = kind;
    switch (kind) {
        case CodebookKind::Azimuth24: {
            for (int i = 0; i < 24; ++i) {
                BeamWeights bw = quantize(steering_vector(geometry, fan(-60.0, 60.0, 24, i)), quantizer);
                bw.beam_id = i;
                cb.beams.push_back(std::move(bw));
            }
            break;
        }
        case CodebookKind::AzimuthElevation12: {
            // Two elevation rows of six azimuth columns; elevation reduces to
            // a per-row scalar gain since the channel model is azimuth-only.
            for (int i = 0; i < 12; ++i) {
                const int row = i / kElevationColumns;
                const int col = i % kElevationColumns;
                BeamWeights bw =
                    quantize(steering_vector(geometry, fan(-60.0, 60.0, kElevationColumns, col)), quantizer);
                bw.beam_id = i;
                bw.elevation_gain_db = kElevationRowGainDb[row];
                cb.beams.push_back(std::move(bw));
            }
            break;
        }
        case CodebookKind::Digital5: {
            // Digital beamforming: continuous phases, no quantizer.
            for (int i = 0; i < 5; ++i) {
                BeamWeights bw = steering_vector(geometry, fan(-45.0, 45.0, 5, i));
                bw.beam_id = i;
                cb.beams.push_back(std::move(bw));
            }
            break;
        }
    }
    return cb;
}

void save_codebook(std::ostream& out, const Codebook& codebook) {
    out << "deepbeam-codebook v1 " << to_string(codebook.kind) << ' ' << codebook.beams.size()
        << ' ' << (codebook.beams.empty() ? 0 : codebook.beams.front().weights.size()) << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& beam : codebook.beams) {
        out << beam.beam_id << ' ' << beam.design_angle_deg;
        for (const auto& w : beam.weights) {
            out << ' ' << rad2deg(std::arg(w)) << ' ' << std::abs(w);
        }
        out << '\n';
    }
}

void save_codebook(const std::string& path, const Codebook& codebook) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open codebook file for writing: " + path);
    save_codebook(out, codebook);
    if (!out) throw FormatError("write failure on codebook file: " + path);
}

Codebook load_codebook(std::istream& in) {
    std::string magic, version, kind_name;
    std::size_t num_beams = 0, num_elements = 0;
    if (!(in >> magic >> version >> kind_name >> num_beams >> num_elements) ||
        magic != "deepbeam-codebook" || version != "v1")
        throw FormatError("codebook: bad header");

    Codebook cb;
    cb.kind = codebook_kind_from_string(kind_name);
    for (std::size_t b = 0; b < num_beams; ++b) {
        BeamWeights bw;
        if (!(in >> bw.beam_id >> bw.design_angle_deg))
            throw FormatError("codebook: truncated beam line " + std::to_string(b));
        bw.weights.resize(num_elements);
        for (std::size_t n = 0; n < num_elements; ++n) {
            double phase_deg = 0.0, mag = 0.0;
            if (!(in >> phase_deg >> mag))
                throw FormatError("codebook: truncated element list on beam " + std::to_string(b));
            bw.weights[n] = std::polar(mag, deg2rad(phase_deg));
        }
        // Elevation row gain is a function of kind and beam id, not stored.
        if (cb.kind == CodebookKind::AzimuthElevation12)
            bw.elevation_gain_db = kElevationRowGainDb[bw.beam_id / kElevationColumns];
        cb.beams.push_back(std::move(bw));
    }
    return cb;
}

Codebook load_codebook(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open codebook file: " + path);
    return load_codebook(in);
}

} // namespace deepbeam::phy
