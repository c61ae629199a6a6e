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

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "modclass/sigsynth.hpp"
#include "oracles.hpp"

using namespace modclass;

namespace {

SymbolSequence fixed(std::vector<int> symbols, int order)
{
    return {std::move(symbols), order};
}

SignalParams params_with(int num_symbols)
{
    SignalParams p;
    p.num_symbols = num_symbols;
    return p;
}

} // namespace

TEST(Symbols, RangeAndReproducibility)
{
    Rng a = make_rng(42), b = make_rng(42);
    const auto s1 = generate_symbols(2, 14, a);
    const auto s2 = generate_symbols(2, 14, b);
    EXPECT_EQ(s1.symbols, s2.symbols);
    ASSERT_EQ(s1.symbols.size(), 14u);
    for (int s : s1.symbols)
        EXPECT_TRUE(s == 0 || s == 1);
}

TEST(Symbols, UniformFrequencies)
{
    Rng rng = make_rng(3);
    const auto seq = generate_symbols(4, 100000, rng);
    std::array<int, 4> counts{};
    for (int s : seq.symbols)
        ++counts[static_cast<std::size_t>(s)];
    for (int c : counts)
        EXPECT_NEAR(c / 1e5, 0.25, 0.01);
}

TEST(Symbols, RejectsBadOrder)
{
    Rng rng = make_rng(1);
    EXPECT_THROW(generate_symbols(1, 5, rng), ConfigError);
    EXPECT_THROW(generate_symbols(6, 5, rng), ConfigError);
    EXPECT_THROW(generate_symbols(2, 0, rng), ConfigError);
}

TEST(Schemes, LabelSets)
{
    EXPECT_EQ(theta1().size(), 8u);
    EXPECT_EQ(theta2().size(), 6u);
    EXPECT_EQ(parse_scheme("16qam"), (ModulationScheme{Family::QAM, 16}));
    EXPECT_EQ(parse_scheme("8PSK").label(), "8PSK");
    EXPECT_THROW(parse_scheme("32qam"), ConfigError);
    EXPECT_THROW(parse_scheme("bogus"), ConfigError);
}

TEST(Params, Arithmetic)
{
    SignalParams p;
    EXPECT_EQ(p.samples_per_symbol(), 160);
    EXPECT_EQ(p.length(), 2240u);
    p.symbol_rate_hz = 300;
    EXPECT_THROW(validate(p), ConfigError);
}

TEST(Params, NyquistViolationRejected)
{
    SignalParams p;
    p.carrier_hz = 7000;
    p.fsk_tone_spacing_hz = 800;
    EXPECT_THROW(validate({Family::FSK, 4}, p), ConfigError);
    EXPECT_NO_THROW(validate({Family::PSK, 2}, p));
}

TEST(Modulate, LengthAndFinite)
{
    Rng rng = make_rng(9);
    SignalParams p;
    for (const auto& s : theta1()) {
        const auto x = modulate(s, generate_symbols(s.order, p.num_symbols, rng), p);
        ASSERT_EQ(x.size(), 2240u) << s.label();
        for (double v : x.samples)
            ASSERT_TRUE(std::isfinite(v));
    }
}

TEST(Modulate, OokZeroSymbolIsSilent)
{
    auto p = params_with(3);
    const auto x = modulate({Family::ASK, 2}, fixed({1, 0, 1}, 2), p);
    for (std::size_t n = 160; n < 320; ++n)
        EXPECT_EQ(x.samples[n], 0.0);
    EXPECT_GT(std::abs(x.samples[5]), 0.1);
}

TEST(Modulate, AskLevels)
{
    auto p = params_with(4);
    const auto x = modulate({Family::ASK, 4}, fixed({0, 1, 2, 3}, 4), p);
    for (int m = 0; m < 4; ++m) {
        double peak = 0;
        for (int n = 0; n < 160; ++n)
            peak = std::max(peak, std::abs(x.samples[static_cast<std::size_t>(m * 160 + n)]));
        EXPECT_NEAR(peak, m / 3.0, 1e-9);
    }
}

TEST(Modulate, BpskPhaseFlipAtBoundary)
{
    auto p = params_with(2);
    const auto x = modulate({Family::PSK, 2}, fixed({0, 1}, 2), p);
    const auto ref = modulate({Family::PSK, 2}, fixed({0, 0}, 2), p);
    for (std::size_t n = 0; n < 160; ++n)
        EXPECT_NEAR(x.samples[n], ref.samples[n], 1e-12);
    for (std::size_t n = 160; n < 320; ++n)
        EXPECT_NEAR(x.samples[n], -ref.samples[n], 1e-12);
}

TEST(Modulate, QamRailLevels)
{
    std::set<double> rails;
    for (int m = 0; m < 16; ++m) {
        auto [a, b] = qam_levels(m, 16);
        rails.insert(a);
        rails.insert(b);
    }
    EXPECT_EQ(rails, (std::set<double>{-3, -1, 1, 3}));

    // Recover rails from a synthesized symbol by projecting on cos and sin.
    auto p = params_with(1);
    for (int m = 0; m < 16; ++m) {
        const auto x = modulate({Family::QAM, 16}, fixed({m}, 16), p);
        double ca = 0, sb = 0;
        for (std::size_t n = 0; n < 160; ++n) {
            const double arg = 2 * std::numbers::pi * 2000.0 * static_cast<double>(n) / 16000.0;
            ca += x.samples[n] * std::cos(arg);
            sb += x.samples[n] * std::sin(arg);
        }
        auto [a, b] = qam_levels(m, 16);
        EXPECT_NEAR(2 * ca / 160, a, 1e-9);
        EXPECT_NEAR(2 * sb / 160, b, 1e-9);
    }
}

TEST(Modulate, QamUnitPower)
{
    auto p = params_with(64);
    p.qam_unit_power = true;
    std::vector<int> all;
    for (int r = 0; r < 4; ++r)
        for (int m = 0; m < 16; ++m)
            all.push_back(m);
    const auto x = modulate({Family::QAM, 16}, fixed(all, 16), p);
    EXPECT_NEAR(x.power(), 0.5, 1e-9);
}

TEST(Modulate, FourFskTonesFromDftPeaks)
{
    auto p = params_with(4);
    const ModulationScheme s{Family::FSK, 4};
    const auto x = modulate(s, fixed({0, 1, 2, 3}, 4), p);
    const std::array<double, 4> expected{1400, 1800, 2200, 2600};
    const int n_points = 1600; // 10 Hz resolution
    for (int m = 0; m < 4; ++m) {
        std::span<const double> seg(x.samples.data() + m * 160, 160);
        int best = 1;
        double best_mag = -1;
        for (int k = 1; k < n_points / 2; ++k) {
            const double mag = oracle::dft_magnitude(seg, n_points, k);
            if (mag > best_mag) {
                best_mag = mag;
                best = k;
            }
        }
        EXPECT_NEAR(best * 16000.0 / n_points, expected[static_cast<std::size_t>(m)], 1e-9);
    }
}

TEST(Modulate, UnitCarrierEnergyPerSymbol)
{
    Rng rng = make_rng(5);
    SignalParams p;
    for (const auto& s : {ModulationScheme{Family::PSK, 2}, ModulationScheme{Family::PSK, 4}, ModulationScheme{Family::PSK, 8},
                          ModulationScheme{Family::FSK, 2}, ModulationScheme{Family::FSK, 4}}) {
        const auto x = modulate(s, generate_symbols(s.order, p.num_symbols, rng), p);
        for (int k = 0; k < p.num_symbols; ++k) {
            double e = 0;
            for (int n = 0; n < 160; ++n)
                e += x.samples[static_cast<std::size_t>(k * 160 + n)] * x.samples[static_cast<std::size_t>(k * 160 + n)];
            EXPECT_NEAR(e / 160, 0.5, 1e-9) << s.label() << " symbol " << k;
        }
    }
}

TEST(Modulate, Deterministic)
{
    SignalParams p;
    for (const auto& s : theta1()) {
        Rng a = make_rng(11), b = make_rng(11);
        const auto x = modulate(s, generate_symbols(s.order, 14, a), p);
        const auto y = modulate(s, generate_symbols(s.order, 14, b), p);
        EXPECT_EQ(x.samples, y.samples);
    }
}

TEST(Modulate, SpectralContainment)
{
    SignalParams p;
    const int n_points = 4480; // bin spacing fs/N = 3.571 Hz
    for (const auto& s : theta1()) {
        Rng rng = make_rng(21);
        const auto x = modulate(s, generate_symbols(s.order, p.num_symbols, rng), p);
        const double half_band = s.family == Family::FSK ? s.order * p.fsk_tone_spacing_hz + 2 * p.symbol_rate_hz
                                                         : 4 * p.symbol_rate_hz * (1 + p.rolloff);
        double inside = 0, total = 0;
        for (int k = 1; k < n_points / 2; ++k) {
            const double f = k * p.sample_rate_hz / n_points;
            const double mag = oracle::dft_magnitude(x.samples, n_points, k);
            total += mag * mag;
            if (std::abs(f - p.carrier_hz) <= half_band)
                inside += mag * mag;
        }
        EXPECT_GE(inside / total, 0.9) << s.label();
    }
}

TEST(Modulate, RrcOption)
{
    SignalParams p;
    p.pulse_shape = PulseShape::RootRaisedCosine;
    const auto taps = rrc_taps(p.samples_per_symbol(), p.rolloff);
    double e = 0;
    for (double v : taps)
        e += v * v;
    EXPECT_NEAR(e, 160.0, 1e-9);
    Rng rng = make_rng(2);
    const auto x = modulate({Family::PSK, 4}, generate_symbols(4, 14, rng), p);
    EXPECT_EQ(x.size(), 2240u);
    EXPECT_GT(x.power(), 0.1);
}

TEST(Modulate, RejectsMismatchedSymbols)
{
    SignalParams p;
    EXPECT_THROW(modulate({Family::PSK, 4}, fixed(std::vector<int>(14, 0), 2), p), ConfigError);
    EXPECT_THROW(modulate({Family::PSK, 2}, fixed(std::vector<int>(13, 0), 2), p), ConfigError);
}
