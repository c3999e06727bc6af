// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <iosfwd>
#include <string>
#include <vector>

namespace deepbeam::phy {

using cplx = std::complex<double>;

/// Uniform linear array, element positions n * element_spacing wavelengths.
struct ArrayGeometry {
    int num_elements = 12;
    double element_spacing = 0.5; // in wavelengths
    double carrier_freq = 60.48e9;

    void validate() const;
};

/// Uniformly spaced phase-shifter settings on [0, 2pi).
struct PhaseQuantizer {
    int num_levels = 4;

    void validate() const;
};

struct BeamWeights {
    std::vector<cplx> weights; // unit magnitude each
    int beam_id = 0;
    double design_angle_deg = 0.0;
    // Reduced elevation model for the azimuth-elevation codebook: the second
    // elevation row radiates with a fixed scalar loss toward the receiver.
    double elevation_gain_db = 0.0;
};

enum class CodebookKind { Azimuth24, AzimuthElevation12, Digital5 };

std::string to_string(CodebookKind kind);
CodebookKind codebook_kind_from_string(const std::string& name);

struct Codebook {
    std::vector<BeamWeights> beams;
    CodebookKind kind = CodebookKind::Azimuth24;

    std::size_t size() const { return beams.size(); }
};

/// w_n = exp(-j 2 pi n spacing sin(angle)). angle in [-90, 90] degrees.
BeamWeights steering_vector(const ArrayGeometry& geometry, double angle_deg);

/// Snap each phase to the nearest quantizer level; exact midpoints round
/// toward the lower level. Magnitudes are forced back to 1. Idempotent.
BeamWeights quantize(const BeamWeights& weights, const PhaseQuantizer& q);

/// AF(theta) = sum_n w_n exp(+j 2 pi n spacing sin(theta)).
cplx array_factor(const BeamWeights& weights, const ArrayGeometry& geometry,
                  double angle_deg);

/// 20 log10 |AF| per grid angle; |AF| = 0 maps to -120 dB.
std::vector<std::pair<double, double>> beam_pattern(const BeamWeights& weights,
                                                    const ArrayGeometry& geometry,
                                                    const std::vector<double>& grid_deg);

Codebook make_codebook(CodebookKind kind, const ArrayGeometry& geometry,
                       const PhaseQuantizer& quantizer);

// Text serialization: header line, then one line per beam with
// beam_id, design_angle, and (phase_degrees, magnitude) per element.
void save_codebook(std::ostream& out, const Codebook& codebook);
void save_codebook(const std::string& path, const Codebook& codebook);
Codebook load_codebook(std::istream& in);
Codebook load_codebook(const std::string& path);

} // namespace deepbeam::phy
