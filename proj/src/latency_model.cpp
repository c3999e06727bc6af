// SPDX-License-Identifier: Apache-2.0
#include "deepbeam/latency_model.hpp"

#include "deepbeam/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace deepbeam::latency {

namespace {

std::int64_t checked_pow10(int exp) {
    if (exp < 0 || exp > 18) throw UsageError("decimal literal out of range");
    std::int64_t v = 1;
    for (int i = 0; i < exp; ++i) v *= 10;
    return v;
}

std::int64_t floor_div(std::int64_t num, std::int64_t den) {
    std::int64_t q = num / den;
    if ((num % den != 0) && ((num < 0) != (den < 0))) --q;
    return q;
}

} // namespace

Rational rational_from_decimal(const std::string& text) {
    std::size_t i = 0;
    const auto fail = [&] { throw UsageError("bad decimal literal: '" + text + "'"); };
    if (text.empty()) fail();

    bool negative = false;
    if (text[i] == '+' || text[i] == '-') negative = text[i++] == '-';

    std::int64_t mantissa = 0;
    int digits = 0, frac_digits = 0;
    bool seen_dot = false, seen_digit = false;
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (c == '.') {
            if (seen_dot) fail();
            seen_dot = true;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            seen_digit = true;
            if (digits >= 18) fail();
            mantissa = mantissa * 10 + (c - '0');
            ++digits;
            if (seen_dot) ++frac_digits;
        } else {
            break;
        }
    }
    if (!seen_digit) fail();

    int exponent = 0;
    if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
        ++i;
        bool exp_neg = false;
        if (i < text.size() && (text[i] == '+' || text[i] == '-')) exp_neg = text[i++] == '-';
        if (i >= text.size()) fail();
        int e = 0;
        for (; i < text.size(); ++i) {
            if (!std::isdigit(static_cast<unsigned char>(text[i]))) fail();
            e = e * 10 + (text[i] - '0');
            if (e > 100) fail();
        }
        exponent = exp_neg ? -e : e;
    }
    if (i != text.size()) fail();

    if (negative) mantissa = -mantissa;
    const int net = exponent - frac_digits;
    if (net >= 0) return Rational(mantissa * checked_pow10(net));
    return Rational(mantissa, checked_pow10(-net));
}

std::string decimal_from_rational(const Rational& value) {
    std::int64_t num = value.numerator();
    std::int64_t den = value.denominator();
    std::string sign;
    if (num < 0) {
        sign = "-";
        num = -num;
    }

    // Strip the 2s and 5s; anything left means no finite decimal expansion.
    std::int64_t d = den;
    int twos = 0, fives = 0;
    while (d % 2 == 0) { d /= 2; ++twos; }
    while (d % 5 == 0) { d /= 5; ++fives; }
    if (d != 1 || std::max(twos, fives) > 18) {
        std::ostringstream os;
        os.precision(12);
        os << static_cast<double>(value.numerator()) / static_cast<double>(value.denominator());
        return os.str();
    }

    const int shift = std::max(twos, fives);
    // num/den == scaled / 10^shift
    unsigned long long scaled = static_cast<unsigned long long>(num);
    for (int i = 0; i < shift - twos; ++i) scaled *= 2;
    for (int i = 0; i < shift - fives; ++i) scaled *= 5;

    std::string digits = std::to_string(scaled);
    if (shift == 0) return sign + digits;
    if (static_cast<int>(digits.size()) <= shift)
        digits.insert(0, shift + 1 - digits.size(), '0');
    digits.insert(digits.size() - shift, ".");
    while (digits.back() == '0') digits.pop_back();
    if (digits.back() == '.') digits.pop_back();
    return sign + digits;
}

double to_double(const Rational& value) {
    return static_cast<double>(value.numerator()) / static_cast<double>(value.denominator());
}

void NrConfig::validate() const {
    if (t_sym_us <= 0 || t_slot_us <= 0 || t_ss_us <= 0)
        throw UsageError("NrConfig: durations must be positive");
    if (n_ss_per_burst < 1) throw UsageError("NrConfig: n_ss_per_burst must be >= 1");
    if (subcarriers < 1) throw UsageError("NrConfig: subcarriers must be >= 1");
    // Slot must hold 14 symbols, to within 2%.
    const double ratio = to_double(t_slot_us) / (14.0 * to_double(t_sym_us));
    if (std::abs(ratio - 1.0) > 0.02)
        throw UsageError("NrConfig: t_slot inconsistent with 14 symbols per slot");
}

void DeepBeamTiming::validate() const {
    if (t_pipeline_stage_us <= 0 || t_pipeline_flush_us <= 0)
        throw UsageError("DeepBeamTiming: delays must be positive");
    if (symbols_per_user < 1) throw UsageError("DeepBeamTiming: J must be >= 1");
    if (samples_per_inference < 1) throw UsageError("DeepBeamTiming: xi must be >= 1");
}

void SweepScenario::validate() const {
    if (n_tx < 1 || m_rx < 1) throw UsageError("SweepScenario: beam counts must be >= 1");
}

Rational t_hat_ebs(std::int64_t n_hat, const NrConfig& cfg) {
    cfg.validate();
    if (n_hat < 1) throw UsageError("t_hat_ebs: residual SSB count must be >= 1");
    if (n_hat % 2 == 0)
        return Rational(n_hat / 2) * cfg.t_slot_us - Rational(2) * cfg.t_sym_us;
    return Rational(n_hat / 2) * cfg.t_slot_us + Rational(6) * cfg.t_sym_us;
}

Rational t_ebs(const SweepScenario& scenario, const NrConfig& cfg) {
    scenario.validate();
    cfg.validate();
    const std::int64_t pairs =
        static_cast<std::int64_t>(scenario.n_tx) * scenario.m_rx;
    const std::int64_t bursts = (pairs + cfg.n_ss_per_burst - 1) / cfg.n_ss_per_burst;
    const std::int64_t n_hat = pairs - (bursts - 1) * cfg.n_ss_per_burst;
    return cfg.t_ss_us * Rational(bursts - 1) + t_hat_ebs(n_hat, cfg);
}

std::int64_t symbols_to_eavesdrop(std::int64_t xi, std::int64_t subcarriers) {
    if (xi < 1 || subcarriers < 1)
        throw UsageError("symbols_to_eavesdrop: inputs must be positive");
    return (xi + subcarriers - 1) / subcarriers;
}

Rational t_db_data(std::int64_t j, std::int64_t e, int n_tx, const NrConfig& cfg) {
    cfg.validate();
    if (j < 1 || e < 1 || n_tx < 1) throw UsageError("t_db_data: inputs must be positive");
    return Rational(std::max(j, e)) * Rational(n_tx) * cfg.t_sym_us;
}

Rational t_db(std::int64_t j, std::int64_t e, int n_tx, const DeepBeamTiming& timing,
              const NrConfig& cfg) {
    cfg.validate();
    timing.validate();
    if (j < 1 || e < 1 || n_tx < 1) throw UsageError("t_db: inputs must be positive");
    const Rational collect = Rational(std::max(j, e)) * cfg.t_sym_us;
    const Rational stage = std::max(collect, timing.t_pipeline_stage_us);
    return stage * Rational(n_tx - 1) + collect + timing.t_pipeline_flush_us;
}

double speedup(const SweepScenario& scenario, const NrConfig& cfg,
               const DeepBeamTiming& timing) {
    const std::int64_t e =
        symbols_to_eavesdrop(timing.samples_per_inference, cfg.subcarriers);
    const Rational num = t_ebs(scenario, cfg);
    const Rational den = t_db(timing.symbols_per_user, e, scenario.n_tx, timing, cfg);
    if (den <= 0) throw UsageError("speedup: t_db must be positive");
    return to_double(num) / to_double(den);
}

std::int64_t samples_in_interval(const Rational& sample_rate_hz,
                                 const Rational& duration_s) {
    if (sample_rate_hz < 0 || duration_s < 0)
        throw UsageError("samples_in_interval: inputs must be nonnegative");
    const Rational product = sample_rate_hz * duration_s;
    return floor_div(product.numerator(), product.denominator());
}

} // namespace deepbeam::latency
