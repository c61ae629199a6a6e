// SPDX-License-Identifier: Apache-2.0
//
// modclass - time-frequency modulation classification toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

// Symbol generation and passband waveform synthesis for MASK, MFSK, MPSK and
// MQAM. Waveforms are real-valued and sampled at SignalParams::sample_rate_hz.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace modclass {

enum class Family { ASK, FSK, PSK, QAM };

struct ModulationScheme {
    Family family = Family::ASK;
    int order = 2;

    friend bool operator==(const ModulationScheme&, const ModulationScheme&) = default;

    std::string name() const
    {
        std::string fam;
        switch (family) {
        case Family::ASK: fam = "ask"; break;
        case Family::FSK: fam = "fsk"; break;
        case Family::PSK: fam = "psk"; break;
        case Family::QAM: fam = "qam"; break;
        }
        return std::to_string(order) + fam;
    }

    // Display form, e.g. "16QAM".
    std::string label() const
    {
        std::string n = name();
        std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
        return n;
    }
};

namespace detail {
inline bool is_power_of_two(int m) { return m >= 2 && (m & (m - 1)) == 0; }

inline int integer_sqrt(int m)
{
    int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(m))));
    return r * r == m ? r : -1;
}
} // namespace detail

inline void validate(const ModulationScheme& s)
{
    if (!detail::is_power_of_two(s.order))
        throw ConfigError("modulation order must be a power of two >= 2, got " + std::to_string(s.order));
    if (s.family == Family::QAM && detail::integer_sqrt(s.order) < 2)
        throw ConfigError("QAM order must be a perfect square, got " + std::to_string(s.order));
}

// The eight-class label set {2ASK, 2FSK, 2PSK, 4ASK, 4FSK, 4PSK, 8PSK, 16QAM}.
inline std::vector<ModulationScheme> theta1()
{
    return {{Family::ASK, 2}, {Family::FSK, 2}, {Family::PSK, 2}, {Family::ASK, 4},
            {Family::FSK, 4}, {Family::PSK, 4}, {Family::PSK, 8}, {Family::QAM, 16}};
}

// The six-class subset without 8PSK and 16QAM.
inline std::vector<ModulationScheme> theta2()
{
    auto t = theta1();
    t.resize(6);
    return t;
}

inline bool is_supported(const ModulationScheme& s)
{
    auto t = theta1();
    return std::find(t.begin(), t.end(), s) != t.end();
}

// Parses names such as "2fsk", "16QAM", "8psk". Only members of theta1() are accepted.
inline ModulationScheme parse_scheme(std::string_view text)
{
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (const auto& s : theta1())
        if (s.name() == lower)
            return s;
    throw ConfigError("unknown modulation scheme '" + std::string(text) + "'");
}

enum class PulseShape { Rectangular, RootRaisedCosine };

struct SignalParams {
    double sample_rate_hz = 16000.0;
    double carrier_hz = 2000.0;
    double symbol_rate_hz = 100.0;
    int num_symbols = 14;
    double initial_phase_rad = 0.0;
    // Dataset augmentation: the harness draws initial_phase_rad uniformly per signal.
    bool random_initial_phase = false;
    PulseShape pulse_shape = PulseShape::Rectangular;
    double rolloff = 0.35;
    double fsk_tone_spacing_hz = 400.0;
    bool qam_unit_power = false;

    int samples_per_symbol() const { return static_cast<int>(std::lround(sample_rate_hz / symbol_rate_hz)); }
    std::size_t length() const { return static_cast<std::size_t>(samples_per_symbol()) * static_cast<std::size_t>(num_symbols); }
    double symbol_period_s() const { return 1.0 / symbol_rate_hz; }
};

inline void validate(const SignalParams& p)
{
    if (!(p.sample_rate_hz > 0) || !(p.symbol_rate_hz > 0) || !(p.carrier_hz > 0))
        throw ConfigError("sample rate, symbol rate and carrier must be positive");
    double ratio = p.sample_rate_hz / p.symbol_rate_hz;
    if (ratio < 1.0 || std::abs(ratio - std::round(ratio)) > 1e-9)
        throw ConfigError("sample rate must be an integer multiple of the symbol rate");
    if (p.num_symbols < 1)
        throw ConfigError("num_symbols must be >= 1");
    if (p.pulse_shape == PulseShape::RootRaisedCosine && !(p.rolloff > 0.0 && p.rolloff <= 1.0))
        throw ConfigError("RRC rolloff must lie in (0, 1]");
    if (!(p.fsk_tone_spacing_hz > 0))
        throw ConfigError("FSK tone spacing must be positive");
}

// Largest |f - f_c| used by the scheme's tones.
inline double max_frequency_offset(const ModulationScheme& s, const SignalParams& p)
{
    return s.family == Family::FSK ? 0.5 * (s.order - 1) * p.fsk_tone_spacing_hz : 0.0;
}

inline void validate(const ModulationScheme& s, const SignalParams& p)
{
    validate(s);
    validate(p);
    double off = max_frequency_offset(s, p);
    if (!(p.sample_rate_hz > 2.0 * (p.carrier_hz + off)))
        throw ConfigError("Nyquist violated: f_s=" + std::to_string(p.sample_rate_hz) + " <= 2*(f_c + " + std::to_string(off) +
                          ") for " + s.label());
    if (!(p.carrier_hz - off > 0.0))
        throw ConfigError("lowest FSK tone is not positive for " + s.label());
}

struct SymbolSequence {
    std::vector<int> symbols;
    int order = 2;
};

struct RealSignal {
    std::vector<double> samples;
    double sample_rate_hz = 0.0;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }

    double power() const
    {
        if (samples.empty())
            return 0.0;
        double acc = 0.0;
        for (double v : samples)
            acc += v * v;
        return acc / static_cast<double>(samples.size());
    }
};

inline SymbolSequence generate_symbols(int order, int count, Rng& rng)
{
    if (!detail::is_power_of_two(order))
        throw ConfigError("symbol alphabet size must be a power of two >= 2, got " + std::to_string(order));
    if (count < 1)
        throw ConfigError("symbol count must be >= 1");
    std::uniform_int_distribution<int> dist(0, order - 1);
    SymbolSequence seq;
    seq.order = order;
    seq.symbols.resize(static_cast<std::size_t>(count));
    for (auto& s : seq.symbols)
        s = dist(rng);
    return seq;
}

// Amplitude level of ASK symbol m: m/(M-1), so 2ASK is on-off keying.
inline double ask_amplitude(int m, int order) { return static_cast<double>(m) / static_cast<double>(order - 1); }

inline double fsk_tone_hz(int m, const ModulationScheme& s, const SignalParams& p)
{
    return p.carrier_hz + (m - 0.5 * (s.order - 1)) * p.fsk_tone_spacing_hz;
}

inline double psk_phase(int m, int order) { return 2.0 * std::numbers::pi * m / order; }

// QAM rail levels (a, b) for symbol m: a from m % sqrt(M), b from m / sqrt(M),
// each in {2i - 1 - sqrt(M) : i = 1..sqrt(M)}.
inline std::pair<double, double> qam_levels(int m, int order)
{
    int side = detail::integer_sqrt(order);
    int ia = m % side;
    int ib = m / side;
    return {static_cast<double>(2 * (ia + 1) - 1 - side), static_cast<double>(2 * (ib + 1) - 1 - side)};
}

// Root-raised-cosine taps centred on the symbol midpoint, spanning `span`
// symbols either side, scaled so that sum(g^2) = sps (same energy as a
// rectangular pulse of one symbol).
inline std::vector<double> rrc_taps(int sps, double rolloff, int span = 4)
{
    const double pi = std::numbers::pi;
    const int half = span * sps;
    std::vector<double> g(static_cast<std::size_t>(2 * half + 1));
    for (int j = -half; j <= half; ++j) {
        double t = static_cast<double>(j) / sps;
        double v;
        if (j == 0) {
            v = 1.0 - rolloff + 4.0 * rolloff / pi;
        } else if (std::abs(std::abs(4.0 * rolloff * t) - 1.0) < 1e-12) {
            v = rolloff / std::sqrt(2.0) *
                ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * rolloff)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * rolloff)));
        } else {
            v = (std::sin(pi * t * (1.0 - rolloff)) + 4.0 * rolloff * t * std::cos(pi * t * (1.0 + rolloff))) /
                (pi * t * (1.0 - (4.0 * rolloff * t) * (4.0 * rolloff * t)));
        }
        g[static_cast<std::size_t>(j + half)] = v;
    }
    double e = 0.0;
    for (double v : g)
        e += v * v;
    double scale = std::sqrt(sps / e);
    for (double& v : g)
        v *= scale;
    return g;
}

namespace detail {

// Carrier waveform for symbol m at time t, without the pulse envelope.
struct SymbolCarrier {
    const ModulationScheme& scheme;
    const SignalParams& params;
    double qam_scale = 1.0;

    double operator()(int m, double t) const
    {
        const double two_pi = 2.0 * std::numbers::pi;
        const double phi0 = params.initial_phase_rad;
        switch (scheme.family) {
        case Family::ASK:
            return ask_amplitude(m, scheme.order) * std::cos(two_pi * params.carrier_hz * t + phi0);
        case Family::FSK:
            return std::cos(two_pi * fsk_tone_hz(m, scheme, params) * t + phi0);
        case Family::PSK:
            return std::cos(two_pi * params.carrier_hz * t + psk_phase(m, scheme.order) + phi0);
        case Family::QAM: {
            auto [a, b] = qam_levels(m, scheme.order);
            double arg = two_pi * params.carrier_hz * t + phi0;
            return qam_scale * (a * std::cos(arg) + b * std::sin(arg));
        }
        }
        return 0.0;
    }
};

} // namespace detail

// Mean rail power 2(M-1)/3 of square QAM; used for optional unit-power scaling.
inline double qam_mean_symbol_energy(int order) { return 2.0 * (order - 1) / 3.0; }

inline RealSignal modulate(const ModulationScheme& scheme, const SymbolSequence& seq, const SignalParams& params)
{
    validate(scheme, params);
    if (seq.order != scheme.order)
        throw ConfigError("symbol alphabet size " + std::to_string(seq.order) + " does not match " + scheme.label());
    if (static_cast<int>(seq.symbols.size()) != params.num_symbols)
        throw ConfigError("symbol count does not match SignalParams::num_symbols");
    for (int s : seq.symbols)
        if (s < 0 || s >= seq.order)
            throw ConfigError("symbol out of range: " + std::to_string(s));

    const int sps = params.samples_per_symbol();
    const std::size_t len = params.length();
    detail::SymbolCarrier carrier{scheme, params,
                                  params.qam_unit_power ? 1.0 / std::sqrt(qam_mean_symbol_energy(scheme.order)) : 1.0};

    RealSignal out;
    out.sample_rate_hz = params.sample_rate_hz;
    out.samples.assign(len, 0.0);

    if (params.pulse_shape == PulseShape::Rectangular) {
        for (std::size_t n = 0; n < len; ++n) {
            int m = seq.symbols[n / static_cast<std::size_t>(sps)];
            out.samples[n] = carrier(m, static_cast<double>(n) / params.sample_rate_hz);
        }
        return out;
    }

    const auto taps = rrc_taps(sps, params.rolloff);
    const int half = static_cast<int>(taps.size() / 2);
    for (int k = 0; k < params.num_symbols; ++k) {
        const int centre = k * sps + sps / 2;
        const int m = seq.symbols[static_cast<std::size_t>(k)];
        const int lo = std::max(0, centre - half);
        const int hi = std::min(static_cast<int>(len) - 1, centre + half);
        for (int n = lo; n <= hi; ++n)
            out.samples[static_cast<std::size_t>(n)] +=
                taps[static_cast<std::size_t>(n - centre + half)] * carrier(m, n / params.sample_rate_hz);
    }
    return out;
}

} // namespace modclass
