// SPDX-License-Identifier: Apache-2.0
#include "deepbeam/waveform_sim.hpp"

#include "deepbeam/errors.hpp"
#include "deepbeam/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

namespace deepbeam::sim {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::uint64_t double_bits(double v) { return std::bit_cast<std::uint64_t>(v); }

// In-place radix-2 FFT; sign = +1 gives the inverse transform (unscaled).
void fft_radix2(std::vector<cplx>& a, int sign) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * kTwoPi / static_cast<double>(len);
        const cplx wl = std::polar(1.0, ang);
        for (std::size_t i = 0; i < n; i += len) {
            cplx w{1.0, 0.0};
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cplx u = a[i + k];
                const cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

cplx qpsk_symbol(Rng& rng) {
    const auto bits = static_cast<std::uint32_t>(rng.next_u64() & 3u);
    const double re = (bits & 1u) ? M_SQRT1_2 : -M_SQRT1_2;
    const double im = (bits & 2u) ? M_SQRT1_2 : -M_SQRT1_2;
    return {re, im};
}

// Root-raised-cosine tap at offset t (in samples) for symbol period ts.
double rrc_tap(double t, double ts, double beta) {
    const double x = t / ts;
    if (std::abs(t) < 1e-12) return (1.0 + beta * (4.0 / M_PI - 1.0)) / ts;
    if (beta > 0.0) {
        const double singular = ts / (4.0 * beta);
        if (std::abs(std::abs(t) - singular) < 1e-9 * ts) {
            const double a = (1.0 + 2.0 / M_PI) * std::sin(M_PI / (4.0 * beta));
            const double b = (1.0 - 2.0 / M_PI) * std::cos(M_PI / (4.0 * beta));
            return beta / (ts * std::sqrt(2.0)) * (a + b);
        }
    }
    const double num =
        std::sin(M_PI * x * (1.0 - beta)) + 4.0 * beta * x * std::cos(M_PI * x * (1.0 + beta));
    const double den = M_PI * x * (1.0 - std::pow(4.0 * beta * x, 2));
    return num / (den * ts);
}

void normalize_unit_power(std::vector<cplx>& x) {
    double power = 0.0;
    for (const auto& v : x) power += std::norm(v);
    power /= static_cast<double>(x.size());
    if (power > 0.0) {
        const double scale = 1.0 / std::sqrt(power);
        for (auto& v : x) v *= scale;
    }
}

std::vector<cplx> fir_filter(const std::vector<cplx>& x, const std::vector<cplx>& taps) {
    std::vector<cplx> y(x.size(), cplx{0.0, 0.0});
    for (std::size_t n = 0; n < x.size(); ++n) {
        cplx acc{0.0, 0.0};
        const std::size_t kmax = std::min(taps.size() - 1, n);
        for (std::size_t k = 0; k <= kmax; ++k) acc += taps[k] * x[n - k];
        y[n] = acc;
    }
    return y;
}

} // namespace

std::string to_string(Modulation m) {
    switch (m) {
        case Modulation::QpskSingleCarrier: return "qpsk-singlecarrier";
        case Modulation::Ofdm: return "ofdm";
    }
    throw UsageError("unknown modulation");
}

Modulation modulation_from_string(const std::string& name) {
    if (name == "qpsk-singlecarrier") return Modulation::QpskSingleCarrier;
    if (name == "ofdm") return Modulation::Ofdm;
    throw UsageError("unknown modulation: " + name);
}

void TxFrameConfig::validate() const {
    if (block_len == 0) throw UsageError("TxFrameConfig: block_len must be > 0");
    if (oversampling < 1) throw UsageError("TxFrameConfig: oversampling must be >= 1");
    if (!(pulse_shaping_rolloff >= 0.0 && pulse_shaping_rolloff <= 1.0))
        throw UsageError("TxFrameConfig: rolloff must be in [0, 1]");
    if (!(sample_rate > 0.0)) throw UsageError("TxFrameConfig: sample_rate must be > 0");
    if (modulation == Modulation::Ofdm) {
        if (num_subcarriers < 1) throw UsageError("TxFrameConfig: num_subcarriers must be >= 1");
        const std::size_t sym_len =
            static_cast<std::size_t>(num_subcarriers) * static_cast<std::size_t>(oversampling);
        if (!is_pow2(sym_len))
            throw UsageError("TxFrameConfig: subcarriers * oversampling must be a power of two");
    }
}

double rx_gain_db(RxGainIndex g) {
    switch (g) {
        case RxGainIndex::Low: return -10.0;
        case RxGainIndex::Mid: return 0.0;
        case RxGainIndex::High: return 10.0;
    }
    throw UsageError("unknown rx gain index");
}

void ChannelConfig::validate() const {
    // +inf switches the noise path off; NaN is never meaningful.
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
        throw UsageError("ChannelConfig: snr_db must be finite or +inf");
    if (!(sample_rate > 0.0)) throw UsageError("ChannelConfig: sample_rate must be > 0");
    for (const auto& tap : multipath) {
        if (tap.delay_samples < 0) throw UsageError("ChannelConfig: multipath delays must be >= 0");
    }
}

AntennaProfile make_antenna_profile(std::uint64_t seed, int num_elements,
                                    double max_phase_deg, double max_gain_db) {
    if (num_elements < 1) throw UsageError("make_antenna_profile: num_elements must be >= 1");
    AntennaProfile p;
    p.seed = seed;
    Rng rng(mix_seed(seed, 0x616e74656e6eULL));
    p.phase_error_deg.resize(num_elements);
    p.gain_error_db.resize(num_elements);
    for (int n = 0; n < num_elements; ++n) {
        p.phase_error_deg[n] = rng.uniform(-max_phase_deg, max_phase_deg);
        p.gain_error_db[n] = rng.uniform(-max_gain_db, max_gain_db);
    }
    return p;
}

AntennaProfile zero_antenna_profile(int num_elements) {
    AntennaProfile p;
    p.seed = 0;
    p.phase_error_deg.assign(num_elements, 0.0);
    p.gain_error_db.assign(num_elements, 0.0);
    return p;
}

std::vector<cplx> generate_tx_block(const TxFrameConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(mix_seed(seed, 0x7478ULL));
    std::vector<cplx> x;

    if (cfg.modulation == Modulation::QpskSingleCarrier) {
        if (cfg.oversampling == 1) {
            x.resize(cfg.block_len);
            for (auto& v : x) v = qpsk_symbol(rng);
        } else {
            const int osf = cfg.oversampling;
            const int span = 8; // RRC span in symbols
            const int ntaps = span * osf + 1;
            const int gd = (ntaps - 1) / 2;
            const std::size_t up_len = cfg.block_len + 2 * ntaps;
            const std::size_t nsym = up_len / osf + 1;

            std::vector<cplx> up(nsym * osf, cplx{0.0, 0.0});
            for (std::size_t s = 0; s < nsym; ++s) up[s * osf] = qpsk_symbol(rng);

            std::vector<double> taps(ntaps);
            for (int k = 0; k < ntaps; ++k)
                taps[k] = rrc_tap(static_cast<double>(k - gd), static_cast<double>(osf),
                                  cfg.pulse_shaping_rolloff);

            x.resize(cfg.block_len);
            for (std::size_t n = 0; n < cfg.block_len; ++n) {
                cplx acc{0.0, 0.0};
                for (int k = 0; k < ntaps; ++k) {
                    const std::size_t idx = n + k; // centered: up index n + k - gd + gd
                    if (idx < up.size()) acc += taps[k] * up[idx];
                }
                x[n] = acc;
            }
        }
    } else {
        const std::size_t sym_len =
            static_cast<std::size_t>(cfg.num_subcarriers) * static_cast<std::size_t>(cfg.oversampling);
        const std::size_t nsym = (cfg.block_len + sym_len - 1) / sym_len;
        x.reserve(nsym * sym_len);
        for (std::size_t s = 0; s < nsym; ++s) {
            std::vector<cplx> spectrum(sym_len, cplx{0.0, 0.0});
            for (int m = 0; m < cfg.num_subcarriers; ++m) {
                const int offset = m - cfg.num_subcarriers / 2;
                const std::size_t bin = (offset + static_cast<int>(sym_len)) % sym_len;
                spectrum[bin] = qpsk_symbol(rng);
            }
            fft_radix2(spectrum, +1); // inverse transform, unscaled
            x.insert(x.end(), spectrum.begin(), spectrum.end());
        }
        x.resize(cfg.block_len);
    }

    normalize_unit_power(x);
    return x;
}

phy::BeamWeights perturb_weights(const phy::BeamWeights& beam, const AntennaProfile& profile) {
    if (beam.weights.size() != profile.phase_error_deg.size())
        throw UsageError("perturb_weights: profile length does not match beam");
    phy::BeamWeights out = beam;
    for (std::size_t n = 0; n < out.weights.size(); ++n) {
        const double phase = profile.phase_error_deg[n] * (M_PI / 180.0);
        const double gain = std::pow(10.0, profile.gain_error_db[n] / 20.0);
        out.weights[n] *= std::polar(gain, phase);
    }
    return out;
}

cplx beam_channel_gain(const phy::BeamWeights& beam, const AntennaProfile& profile,
                       const phy::ArrayGeometry& geometry, double aoa_deg) {
    const phy::BeamWeights perturbed = perturb_weights(beam, profile);
    const cplx af = phy::array_factor(perturbed, geometry, aoa_deg);
    return af * std::pow(10.0, beam.elevation_gain_db / 20.0);
}

std::vector<cplx> beam_signature_taps(const phy::BeamWeights& perturbed_beam,
                                      const BeamSignature& sig) {
    std::vector<cplx> taps{cplx{1.0, 0.0}};
    if (!sig.enabled || sig.num_taps <= 1) return taps;

    // The echo train is a fingerprint of the radiated weights: identical
    // hardware states share taps, any weight or elevation change moves them.
    std::uint64_t h = 0x6265616dULL;
    for (const auto& w : perturbed_beam.weights) {
        h = mix_seed(h, double_bits(w.real()));
        h = mix_seed(h, double_bits(w.imag()));
    }
    h = mix_seed(h, double_bits(perturbed_beam.elevation_gain_db));

    Rng rng(h);
    const double level = std::pow(10.0, sig.tap_level_db / 20.0);
    for (int t = 1; t < sig.num_taps; ++t) {
        const double mag = level * rng.uniform(0.6, 1.0);
        const double phase = rng.uniform(0.0, kTwoPi);
        taps.push_back(std::polar(mag, phase));
    }
    return taps;
}

std::vector<cplx> apply_beam(const std::vector<cplx>& x, const phy::BeamWeights& beam,
                             const AntennaProfile& profile, const phy::ArrayGeometry& geometry,
                             double aoa_deg, const BeamSignature& sig) {
    if (x.empty()) throw UsageError("apply_beam: empty input");
    if (static_cast<int>(beam.weights.size()) != geometry.num_elements)
        throw UsageError("apply_beam: beam length does not match geometry");

    const phy::BeamWeights perturbed = perturb_weights(beam, profile);
    const cplx af = phy::array_factor(perturbed, geometry, aoa_deg);
    const cplx gain = af * std::pow(10.0, beam.elevation_gain_db / 20.0);

    std::vector<cplx> y;
    if (sig.enabled && sig.num_taps > 1) {
        y = fir_filter(x, beam_signature_taps(perturbed, sig));
    } else {
        y = x;
    }
    for (auto& v : y) v *= gain;
    return y;
}

std::vector<cplx> impair(const std::vector<cplx>& y, const ChannelConfig& ch,
                         std::uint64_t seed) {
    ch.validate();
    std::vector<cplx> z = y;

    if (!ch.multipath.empty()) {
        std::vector<cplx> filtered(z.size(), cplx{0.0, 0.0});
        for (std::size_t n = 0; n < z.size(); ++n) {
            cplx acc{0.0, 0.0};
            for (const auto& tap : ch.multipath) {
                if (static_cast<std::size_t>(tap.delay_samples) <= n)
                    acc += tap.gain * z[n - tap.delay_samples];
            }
            filtered[n] = acc;
        }
        z = std::move(filtered);
    }

    if (ch.cfo_hz != 0.0) {
        const double step = kTwoPi * ch.cfo_hz / ch.sample_rate;
        for (std::size_t n = 0; n < z.size(); ++n)
            z[n] *= std::polar(1.0, step * static_cast<double>(n));
    }

    if (ch.timing_offset != 0.0) {
        const double off = ch.timing_offset;
        const auto whole = static_cast<std::int64_t>(std::floor(off));
        const double frac = off - static_cast<double>(whole);
        std::vector<cplx> shifted(z.size(), cplx{0.0, 0.0});
        for (std::size_t n = 0; n < z.size(); ++n) {
            const std::int64_t i0 = static_cast<std::int64_t>(n) - whole;
            const std::int64_t i1 = i0 - 1;
            cplx v{0.0, 0.0};
            if (i0 >= 0 && i0 < static_cast<std::int64_t>(z.size())) v += (1.0 - frac) * z[i0];
            if (frac != 0.0 && i1 >= 0 && i1 < static_cast<std::int64_t>(z.size()))
                v += frac * z[i1];
            shifted[n] = v;
        }
        z = std::move(shifted);
    }

    const double gain = std::pow(10.0, rx_gain_db(ch.rx_gain_index) / 20.0);
    for (auto& v : z) v *= gain;

    if (std::isfinite(ch.snr_db)) {
        double p_signal = 0.0;
        for (const auto& v : z) p_signal += std::norm(v);
        p_signal /= static_cast<double>(z.size());
        if (p_signal > 0.0) {
            Rng rng(mix_seed(seed, 0x6e6f697365ULL));
            std::vector<cplx> noise(z.size());
            double p_noise = 0.0;
            for (auto& v : noise) {
                v = rng.complex_normal();
                p_noise += std::norm(v);
            }
            p_noise /= static_cast<double>(noise.size());
            // Scale the realization so the block-empirical SNR is exact.
            const double target = p_signal * std::pow(10.0, -ch.snr_db / 10.0);
            const double scale = std::sqrt(target / p_noise);
            for (std::size_t n = 0; n < z.size(); ++n) z[n] += noise[n] * scale;
        }
    }
    return z;
}

void ScenarioGrid::validate() const {
    geometry.validate();
    tx.validate();
    if (codebook.beams.empty()) throw UsageError("ScenarioGrid: empty codebook");
    if (aoa_set_deg.empty()) throw UsageError("ScenarioGrid: empty AoA set");
    if (gain_grid.empty()) throw UsageError("ScenarioGrid: empty gain grid");
    if (snr_grid_db.empty()) throw UsageError("ScenarioGrid: empty SNR grid");
    if (antenna_seeds.empty()) throw UsageError("ScenarioGrid: no antenna seeds");
    if (blocks_per_cell < 1) throw UsageError("ScenarioGrid: blocks_per_cell must be >= 1");
}

namespace {

std::uint64_t cell_seed(const ScenarioGrid& grid, int beam_index, double aoa_deg,
                        RxGainIndex gain, double snr_db, std::uint64_t antenna_seed) {
    std::uint64_t h = mix_seed(grid.master_seed, static_cast<std::uint64_t>(grid.scenario));
    h = mix_seed(h, antenna_seed);
    h = mix_seed(h, static_cast<std::uint64_t>(beam_index));
    h = mix_seed(h, double_bits(aoa_deg));
    h = mix_seed(h, static_cast<std::uint64_t>(gain));
    h = mix_seed(h, double_bits(snr_db));
    return h;
}

} // namespace

std::vector<cplx> synth_rx_block(const ScenarioGrid& grid, int beam_index, double aoa_deg,
                                 RxGainIndex gain, double snr_db, std::uint64_t antenna_seed,
                                 std::int64_t block_ordinal) {
    const std::uint64_t cseed = cell_seed(grid, beam_index, aoa_deg, gain, snr_db, antenna_seed);
    const std::uint64_t bseed = mix_seed(cseed, static_cast<std::uint64_t>(block_ordinal));

    const auto x = generate_tx_block(grid.tx, mix_seed(bseed, 1));
    const auto profile = make_antenna_profile(antenna_seed, grid.geometry.num_elements);
    auto y = apply_beam(x, grid.codebook.beams[beam_index], profile, grid.geometry, aoa_deg,
                        grid.signature);

    ChannelConfig ch;
    ch.aoa_deg = aoa_deg;
    ch.snr_db = snr_db;
    ch.rx_gain_index = gain;
    ch.antenna_profile_seed = antenna_seed;
    ch.multipath = grid.multipath;
    ch.sample_rate = grid.tx.sample_rate;
    if (grid.cfo_max_hz > 0.0 || grid.timing_offset_max > 0.0) {
        Rng nuisance(mix_seed(bseed, 2));
        if (grid.cfo_max_hz > 0.0) ch.cfo_hz = nuisance.uniform(-grid.cfo_max_hz, grid.cfo_max_hz);
        if (grid.timing_offset_max > 0.0)
            ch.timing_offset = nuisance.uniform(0.0, grid.timing_offset_max);
    }
    return impair(y, ch, mix_seed(bseed, 3));
}

data::IQBlock to_iq_block(const std::vector<cplx>& samples, std::int64_t block_index) {
    data::IQBlock block;
    block.block_index = block_index;
    block.samples.reserve(samples.size());
    for (const auto& v : samples)
        block.samples.emplace_back(static_cast<float>(v.real()), static_cast<float>(v.imag()));
    return block;
}

const data::DatasetManifest& synth_dataset(const ScenarioGrid& grid, data::DatasetWriter& sink) {
    grid.validate();
    std::int64_t global_index = 0;
    for (std::uint64_t antenna_seed : grid.antenna_seeds) {
        for (std::size_t beam = 0; beam < grid.codebook.beams.size(); ++beam) {
            for (std::size_t ai = 0; ai < grid.aoa_set_deg.size(); ++ai) {
                for (std::size_t gi = 0; gi < grid.gain_grid.size(); ++gi) {
                    for (double snr : grid.snr_grid_db) {
                        data::Label label;
                        label.txb = grid.codebook.beams[beam].beam_id;
                        label.aoa_class = static_cast<int>(ai);
                        label.gain_index = static_cast<int>(grid.gain_grid[gi]);
                        label.antenna_seed = antenna_seed;
                        label.scenario = grid.scenario;
                        label.snr_db = snr;
                        for (int b = 0; b < grid.blocks_per_cell; ++b) {
                            const auto samples =
                                synth_rx_block(grid, static_cast<int>(beam), grid.aoa_set_deg[ai],
                                               grid.gain_grid[gi], snr, antenna_seed, b);
                            sink.write_block(label, to_iq_block(samples, global_index++));
                        }
                    }
                }
            }
        }
    }
    return sink.finalize();
}

} // namespace deepbeam::sim
