// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "deepbeam/iq_dataset.hpp"
#include "deepbeam/phased_array.hpp"

#include <array>
#include <complex>
#include <cstdint>
#include <vector>

namespace deepbeam::sim {

using cplx = std::complex<double>;

enum class Modulation { QpskSingleCarrier, Ofdm };

std::string to_string(Modulation m);
Modulation modulation_from_string(const std::string& name);

struct TxFrameConfig {
    std::size_t block_len = 2048;
    Modulation modulation = Modulation::QpskSingleCarrier;
    int oversampling = 1;
    double pulse_shaping_rolloff = 0.25;
    double sample_rate = 3.072e9;
    int num_subcarriers = 256; // OFDM only

    void validate() const;
};

enum class RxGainIndex { Low = 0, Mid = 1, High = 2 };

/// Scalar receiver gain per index: {-10, 0, +10} dB.
double rx_gain_db(RxGainIndex g);

struct MultipathTap {
    int delay_samples = 0;
    cplx gain{0.0, 0.0};
};

struct ChannelConfig {
    double aoa_deg = 0.0;
    double snr_db = 20.0; // +infinity disables the noise path
    double cfo_hz = 0.0;
    double timing_offset = 0.0; // fractional samples
    RxGainIndex rx_gain_index = RxGainIndex::Mid;
    std::uint64_t antenna_profile_seed = 0;
    std::vector<MultipathTap> multipath;
    double sample_rate = 3.072e9;

    void validate() const;
};

/// Per-element phase/gain errors of one physical array, fixed by its seed.
struct AntennaProfile {
    std::vector<double> phase_error_deg;
    std::vector<double> gain_error_db;
    std::uint64_t seed = 0;
};

AntennaProfile make_antenna_profile(std::uint64_t seed, int num_elements,
                                    double max_phase_deg = 10.0, double max_gain_db = 1.0);
AntennaProfile zero_antenna_profile(int num_elements);

/// Unit-average-power payload block, deterministic in the seed.
std::vector<cplx> generate_tx_block(const TxFrameConfig& cfg, std::uint64_t seed);

/// Per-beam micro-distortion: a short FIR echo train derived from the
/// radiated (profile-perturbed) weights. Tap magnitudes stay at or below
/// tap_level_db relative to the unit main tap.
struct BeamSignature {
    bool enabled = true;
    double tap_level_db = -15.0;
    int num_taps = 3;
};

phy::BeamWeights perturb_weights(const phy::BeamWeights& beam, const AntennaProfile& profile);

/// Complex channel gain seen at the receiver: array factor of the perturbed
/// weights at the AoA, times the beam's elevation-row scalar gain.
cplx beam_channel_gain(const phy::BeamWeights& beam, const AntennaProfile& profile,
                       const phy::ArrayGeometry& geometry, double aoa_deg);

/// FIR taps (main tap first) for the radiated beam.
std::vector<cplx> beam_signature_taps(const phy::BeamWeights& perturbed_beam,
                                      const BeamSignature& sig);

/// Transmit x through a beam toward an AoA: y = gain * (h_beam (*) x).
std::vector<cplx> apply_beam(const std::vector<cplx>& x, const phy::BeamWeights& beam,
                             const AntennaProfile& profile, const phy::ArrayGeometry& geometry,
                             double aoa_deg, const BeamSignature& sig = {});

/// Receiver-chain impairments: multipath FIR, CFO rotation, fractional
/// timing shift, gain scaling, then AWGN calibrated to the block SNR.
std::vector<cplx> impair(const std::vector<cplx>& y, const ChannelConfig& ch,
                         std::uint64_t seed);

/// Full scenario grid for dataset synthesis: cells are the cartesian product
/// beams x AoAs x gains x SNRs under one antenna seed list and scenario tag.
struct ScenarioGrid {
    phy::ArrayGeometry geometry;
    phy::Codebook codebook;
    TxFrameConfig tx;
    BeamSignature signature;
    std::vector<double> aoa_set_deg = {0.0};
    std::vector<RxGainIndex> gain_grid = {RxGainIndex::Mid};
    std::vector<double> snr_grid_db = {20.0};
    std::vector<std::uint64_t> antenna_seeds = {1};
    data::Scenario scenario = data::Scenario::Basic;
    int blocks_per_cell = 100;
    std::uint64_t master_seed = 0;
    // Optional per-block nuisance impairments (uniform draws in +-max).
    double cfo_max_hz = 0.0;
    double timing_offset_max = 0.0;
    std::vector<MultipathTap> multipath;

    void validate() const;
};

/// Emit the labeled grid through the dataset sink; returns the manifest.
/// Every block's randomness derives from (master seed, cell coords, block
/// index), so any generation order produces identical bytes.
const data::DatasetManifest& synth_dataset(const ScenarioGrid& grid, data::DatasetWriter& sink);

/// Convenience: synthesize one received block for the given cell coordinates.
std::vector<cplx> synth_rx_block(const ScenarioGrid& grid, int beam_index, double aoa_deg,
                                 RxGainIndex gain, double snr_db, std::uint64_t antenna_seed,
                                 std::int64_t block_ordinal);

data::IQBlock to_iq_block(const std::vector<cplx>& samples, std::int64_t block_index);

} // namespace deepbeam::sim
