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

// Flat, time-invariant SISO/MIMO channels with per-branch AWGN.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "rng.hpp"
#include "sigsynth.hpp"

namespace modclass {

// One transmit->receive path: attenuation and a timing offset within one symbol.
struct ChannelPath {
    double gain = 1.0;
    double timing_offset_s = 0.0;
};

class ChannelMatrix {
public:
    ChannelMatrix() = default;
    ChannelMatrix(int nt, int nr) : nt_(nt), nr_(nr), paths_(static_cast<std::size_t>(nt * nr)) {}

    // nr x nt identity with zero offsets.
    static ChannelMatrix identity(int n)
    {
        ChannelMatrix ch(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                ch.at(i, j).gain = (i == j) ? 1.0 : 0.0;
        return ch;
    }

    int nt() const { return nt_; }
    int nr() const { return nr_; }

    ChannelPath& at(int rx, int tx) { return paths_[static_cast<std::size_t>(rx * nt_ + tx)]; }
    const ChannelPath& at(int rx, int tx) const { return paths_[static_cast<std::size_t>(rx * nt_ + tx)]; }

    Eigen::MatrixXd gains() const
    {
        Eigen::MatrixXd g(nr_, nt_);
        for (int i = 0; i < nr_; ++i)
            for (int j = 0; j < nt_; ++j)
                g(i, j) = at(i, j).gain;
        return g;
    }

    double min_singular_value() const
    {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(gains());
        return svd.singularValues().minCoeff();
    }

private:
    int nt_ = 0;
    int nr_ = 0;
    std::vector<ChannelPath> paths_;
};

struct ReceivedBundle {
    std::vector<RealSignal> branches;
    std::optional<ModulationScheme> truth_label;
    double snr_db = std::numeric_limits<double>::infinity();
};

// Noise variance reaching `snr_db` against `signal_power`.
inline double noise_variance(double signal_power, double snr_db) { return signal_power / std::pow(10.0, snr_db / 10.0); }

// Adds white Gaussian noise whose variance is set from the measured power of
// `signal`. snr_db = +inf returns the input unchanged.
inline RealSignal add_awgn(const RealSignal& signal, double snr_db, Rng& rng)
{
    if (signal.empty())
        throw NumericError("add_awgn: empty signal");
    if (std::isinf(snr_db) && snr_db > 0)
        return signal;
    if (std::isnan(snr_db))
        throw ConfigError("add_awgn: SNR is NaN");
    const double p = signal.power();
    if (!(p > 0.0))
        throw NumericError("add_awgn: signal has zero power, SNR undefined");
    std::normal_distribution<double> gauss(0.0, std::sqrt(noise_variance(p, snr_db)));
    RealSignal out = signal;
    for (double& v : out.samples)
        v += gauss(rng);
    return out;
}

// Draws gains ~ U[0,1] and offsets ~ U[0, T_s) for every path, redrawing the
// whole matrix while its smallest singular value is below `min_singular`.
inline ChannelMatrix sample_channel(int nt, int nr, double symbol_period_s, Rng& rng, double min_singular = 1e-3)
{
    if (nt < 1)
        throw ConfigError("sample_channel: nt must be >= 1");
    if (nr < nt)
        throw ConfigError("sample_channel: nr (" + std::to_string(nr) + ") < nt (" + std::to_string(nt) + ")");
    if (!(symbol_period_s > 0))
        throw ConfigError("sample_channel: symbol period must be positive");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    constexpr int max_attempts = 10000;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        ChannelMatrix ch(nt, nr);
        for (int i = 0; i < nr; ++i)
            for (int j = 0; j < nt; ++j) {
                ch.at(i, j).gain = unit(rng);
                ch.at(i, j).timing_offset_s = unit(rng) * symbol_period_s;
            }
        if (ch.min_singular_value() >= min_singular)
            return ch;
    }
    throw NumericError("sample_channel: no well-conditioned draw after 10000 attempts");
}

// Noiseless part of y_i(n) = sum_j g_ij x_j(n - d_ij), d_ij = round(offset_ij * f_s).
inline std::vector<RealSignal> apply_channel(const std::vector<RealSignal>& streams, const ChannelMatrix& ch)
{
    if (static_cast<int>(streams.size()) != ch.nt())
        throw ConfigError("mimo_transmit: " + std::to_string(streams.size()) + " streams for a channel with nt=" +
                          std::to_string(ch.nt()));
    if (streams.empty())
        throw ConfigError("mimo_transmit: no streams");
    const std::size_t len = streams.front().size();
    const double fs = streams.front().sample_rate_hz;
    for (const auto& s : streams)
        if (s.size() != len || s.sample_rate_hz != fs)
            throw DataError("mimo_transmit: streams differ in length or sample rate");

    std::vector<RealSignal> out(static_cast<std::size_t>(ch.nr()));
    for (int i = 0; i < ch.nr(); ++i) {
        auto& y = out[static_cast<std::size_t>(i)];
        y.sample_rate_hz = fs;
        y.samples.assign(len, 0.0);
        for (int j = 0; j < ch.nt(); ++j) {
            const auto& path = ch.at(i, j);
            const auto& x = streams[static_cast<std::size_t>(j)].samples;
            const auto delay = static_cast<std::size_t>(std::llround(path.timing_offset_s * fs));
            for (std::size_t n = delay; n < len; ++n)
                y.samples[n] += path.gain * x[n - delay];
        }
    }
    return out;
}

// Passes nt streams through `ch` and adds AWGN per receive branch, each branch
// calibrated to `snr_db` against its own noiseless power.
inline ReceivedBundle mimo_transmit(const std::vector<RealSignal>& streams, const ChannelMatrix& ch, double snr_db, Rng& rng)
{
    ReceivedBundle bundle;
    bundle.snr_db = snr_db;
    auto clean = apply_channel(streams, ch);
    bundle.branches.reserve(clean.size());
    for (auto& y : clean)
        bundle.branches.push_back(add_awgn(y, snr_db, rng));
    return bundle;
}

} // namespace modclass
