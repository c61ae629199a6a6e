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

// Windowed STFT spectrogram: framing, windowing, spectral magnitude over bins
// 1..N/2-1, global min-max normalisation, jet colour mapping and resizing to a
// fixed classifier input.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "fft.hpp"
#include "sigsynth.hpp"

namespace modclass {

enum class WindowKind { Hamming, Hanning, Blackman };

struct StftConfig {
    int window_len = 320;
    int overlap_len = 315;
    int fft_points = 2048;
    WindowKind window = WindowKind::Hamming;

    int step() const { return window_len - overlap_len; }
    int num_bins() const { return fft_points / 2 - 1; }
};

inline void validate(const StftConfig& c)
{
    if (c.window_len < 2)
        throw ConfigError("STFT window length must be >= 2");
    if (c.overlap_len < 0 || c.overlap_len >= c.window_len)
        throw ConfigError("STFT overlap must satisfy 0 <= overlap < window length");
    if (c.fft_points < c.window_len || c.fft_points < 4 || (c.fft_points & (c.fft_points - 1)) != 0)
        throw ConfigError("FFT size must be a power of two >= window length");
}

// Number of whole frames in a signal of `length` samples; a trailing partial frame is dropped.
inline std::size_t frame_count(std::size_t length, const StftConfig& c)
{
    if (length < static_cast<std::size_t>(c.window_len))
        return 0;
    return (length - static_cast<std::size_t>(c.overlap_len)) / static_cast<std::size_t>(c.step());
}

inline std::vector<double> make_window(WindowKind kind, int len)
{
    if (len < 2)
        throw ConfigError("window length must be >= 2");
    const double two_pi = 2.0 * std::numbers::pi;
    const double denom = static_cast<double>(len - 1);
    std::vector<double> w(static_cast<std::size_t>(len));
    // Evaluate the first half and mirror it so that w(n) == w(len-1-n) exactly.
    for (int n = 0; n <= (len - 1) / 2; ++n) {
        const double c1 = std::cos(two_pi * n / denom);
        double v = 0.0;
        switch (kind) {
        case WindowKind::Hamming: v = 0.54 - 0.46 * c1; break;
        case WindowKind::Hanning: v = 0.5 - 0.5 * c1; break;
        case WindowKind::Blackman: v = 0.42 - 0.5 * c1 + 0.08 * std::cos(2.0 * two_pi * n / denom); break;
        }
        w[static_cast<std::size_t>(n)] = v;
        w[static_cast<std::size_t>(len - 1 - n)] = v;
    }
    return w;
}

// Frame F holds y(F*step + n) * w(n) for n in [0, window_len).
inline std::vector<std::vector<double>> frame_signal(const RealSignal& y, const StftConfig& cfg)
{
    validate(cfg);
    if (y.size() < static_cast<std::size_t>(cfg.window_len))
        throw DataError("frame_signal: signal of " + std::to_string(y.size()) + " samples is shorter than the window (" +
                        std::to_string(cfg.window_len) + ")");
    const auto w = make_window(cfg.window, cfg.window_len);
    const std::size_t nf = frame_count(y.size(), cfg);
    std::vector<std::vector<double>> frames(nf, std::vector<double>(w.size()));
    for (std::size_t f = 0; f < nf; ++f) {
        const std::size_t start = f * static_cast<std::size_t>(cfg.step());
        for (std::size_t n = 0; n < w.size(); ++n)
            frames[f][n] = y.samples[start + n] * w[n];
    }
    return frames;
}

namespace detail {
// |z| without std::hypot's overflow guards; magnitudes here are far from the limits.
inline double magnitude(std::complex<double> z) { return std::sqrt(z.real() * z.real() + z.imag() * z.imag()); }
} // namespace detail

// |DFT_N(frame)(k)| for k = 1 .. N/2-1, the frame zero-padded to N points.
inline std::vector<double> frame_spectrum(std::span<const double> frame, int fft_points)
{
    if (frame.size() > static_cast<std::size_t>(fft_points))
        throw ConfigError("frame longer than FFT size");
    FftPlan plan(static_cast<std::size_t>(fft_points));
    std::vector<std::complex<double>> buf(plan.size());
    std::copy(frame.begin(), frame.end(), buf.begin());
    plan.forward(buf);
    std::vector<double> mag(static_cast<std::size_t>(fft_points / 2 - 1));
    for (std::size_t k = 1; k <= mag.size(); ++k)
        mag[k - 1] = detail::magnitude(buf[k]);
    return mag;
}

// Row-major (rows x cols) time-frequency matrix; row r is bin k = r + 1, column F is frame F.
struct SpectrogramMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;
    double hz_per_bin = 0.0;
    double seconds_per_frame = 0.0;
    bool degenerate = false;

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Spectral magnitude S(k, F) for all frames. Two real frames share one complex
// FFT: with z = a + jb, A(k) = (Z(k) + conj Z(N-k)) / 2, B(k) = (Z(k) - conj Z(N-k)) / 2j.
inline SpectrogramMatrix magnitude_matrix(const RealSignal& y, const StftConfig& cfg)
{
    const auto frames = frame_signal(y, cfg);
    const std::size_t n = static_cast<std::size_t>(cfg.fft_points);
    FftPlan plan(n);

    SpectrogramMatrix s;
    s.rows = static_cast<std::size_t>(cfg.num_bins());
    s.cols = frames.size();
    s.data.assign(s.rows * s.cols, 0.0);
    s.hz_per_bin = y.sample_rate_hz / static_cast<double>(n);
    s.seconds_per_frame = cfg.step() / y.sample_rate_hz;

    std::vector<std::complex<double>> buf(n);
    for (std::size_t f = 0; f < frames.size(); f += 2) {
        const bool pair = f + 1 < frames.size();
        std::fill(buf.begin(), buf.end(), std::complex<double>{});
        for (std::size_t i = 0; i < frames[f].size(); ++i)
            buf[i] = {frames[f][i], pair ? frames[f + 1][i] : 0.0};
        plan.forward(buf);
        for (std::size_t k = 1; k <= s.rows; ++k) {
            const auto zk = buf[k];
            const auto zc = std::conj(buf[n - k]);
            s.at(k - 1, f) = detail::magnitude(0.5 * (zk + zc));
            if (pair)
                s.at(k - 1, f + 1) = detail::magnitude(0.5 * (zk - zc));
        }
    }
    return s;
}

// Global min-max normalisation to [0, 1]. A constant matrix maps to all zeros
// with `degenerate` set.
inline SpectrogramMatrix normalize(SpectrogramMatrix s)
{
    if (s.data.empty()) {
        s.degenerate = true;
        return s;
    }
    const auto [lo_it, hi_it] = std::minmax_element(s.data.begin(), s.data.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) {
        std::fill(s.data.begin(), s.data.end(), 0.0);
        s.degenerate = true;
        return s;
    }
    const double range = hi - lo;
    for (double& v : s.data)
        v = (v - lo) / range;
    s.degenerate = false;
    return s;
}

// Interleaved height x width x channels image (HWC, row-major), values in [0, 1].
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f) : height(h), width(w), channels(c), data(h * w * c, fill) {}

    float& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * channels + c]; }
    float at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * channels + c]; }

    friend bool operator==(const Image&, const Image&) = default;
};

inline std::array<double, 3> jet_color(double v)
{
    auto clamp01 = [](double x) { return std::clamp(x, 0.0, 1.0); };
    return {clamp01(std::min(4.0 * v - 1.5, -4.0 * v + 4.5)), clamp01(std::min(4.0 * v - 0.5, -4.0 * v + 3.5)),
            clamp01(std::min(4.0 * v + 0.5, -4.0 * v + 2.5))};
}

inline Image jet_map(const SpectrogramMatrix& g)
{
    Image img(g.rows, g.cols, 3);
    for (std::size_t r = 0; r < g.rows; ++r)
        for (std::size_t c = 0; c < g.cols; ++c) {
            const double v = g.at(r, c);
            if (!(v >= 0.0 && v <= 1.0))
                throw DataError("jet_map: value " + std::to_string(v) + " outside [0, 1] at (" + std::to_string(r) + ", " +
                                std::to_string(c) + ")");
            const auto rgb = jet_color(v);
            for (std::size_t ch = 0; ch < 3; ++ch)
                img.at(r, c, ch) = static_cast<float>(rgb[ch]);
        }
    return img;
}

// Single-channel image of G, skipping the colour mapping.
inline Image gray_image(const SpectrogramMatrix& g)
{
    Image img(g.rows, g.cols, 1);
    for (std::size_t i = 0; i < g.data.size(); ++i)
        img.data[i] = static_cast<float>(g.data[i]);
    return img;
}

enum class FitMode { Resize, CropPad };

namespace detail {

struct Tap {
    std::size_t index;
    double weight;
};

// Per-output-sample taps of a triangle (bilinear) kernel. When shrinking, the
// kernel is widened by the scale factor so every input sample contributes.
inline std::vector<std::vector<Tap>> bilinear_taps(std::size_t in, std::size_t out)
{
    std::vector<std::vector<Tap>> taps(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    const double support = std::max(1.0, scale);
    for (std::size_t i = 0; i < out; ++i) {
        const double centre = (static_cast<double>(i) + 0.5) * scale - 0.5;
        const auto lo = static_cast<long>(std::floor(centre - support));
        const auto hi = static_cast<long>(std::ceil(centre + support));
        double total = 0.0;
        for (long x = lo; x <= hi; ++x) {
            if (x < 0 || x >= static_cast<long>(in))
                continue;
            const double w = 1.0 - std::abs(static_cast<double>(x) - centre) / support;
            if (w <= 0.0)
                continue;
            taps[i].push_back({static_cast<std::size_t>(x), w});
            total += w;
        }
        for (auto& t : taps[i])
            t.weight /= total;
    }
    return taps;
}

} // namespace detail

// Separable bilinear resize with area-proportional smoothing when shrinking.
inline Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w)
{
    if (img.height == out_h && img.width == out_w)
        return img;
    const auto ty = detail::bilinear_taps(img.height, out_h);
    const auto tx = detail::bilinear_taps(img.width, out_w);
    const std::size_t ch = img.channels;

    std::vector<double> tmp(img.height * out_w * ch, 0.0);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < out_w; ++x)
            for (const auto& t : tx[x])
                for (std::size_t c = 0; c < ch; ++c)
                    tmp[(y * out_w + x) * ch + c] += t.weight * img.at(y, t.index, c);

    Image out(out_h, out_w, ch);
    for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x)
            for (std::size_t c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (const auto& t : ty[y])
                    acc += t.weight * tmp[(t.index * out_w + x) * ch + c];
                out.at(y, x, c) = static_cast<float>(acc);
            }
    return out;
}

// Centre-crops each axis longer than the target and zero-pads (at the end) each shorter one.
inline Image crop_pad(const Image& img, std::size_t out_h, std::size_t out_w)
{
    Image out(out_h, out_w, img.channels, 0.0f);
    const std::size_t y0 = img.height > out_h ? (img.height - out_h) / 2 : 0;
    const std::size_t x0 = img.width > out_w ? (img.width - out_w) / 2 : 0;
    const std::size_t h = std::min(img.height, out_h);
    const std::size_t w = std::min(img.width, out_w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < img.channels; ++c)
                out.at(y, x, c) = img.at(y + y0, x + x0, c);
    return out;
}

inline Image fit_to_input(const Image& img, int target, FitMode mode = FitMode::Resize)
{
    if (target < 8)
        throw ConfigError("fit_to_input: target must be >= 8");
    const auto t = static_cast<std::size_t>(target);
    return mode == FitMode::Resize ? resize_bilinear(img, t, t) : crop_pad(img, t, t);
}

struct FitOptions {
    // 0 keeps the full (N/2-1) x N_F image.
    int target = 64;
    FitMode mode = FitMode::Resize;
    bool grayscale = false;
};

// Signal -> frames -> |FFT| -> normalised G -> jet (or grey) -> fitted image.
inline Image spectrogram(const RealSignal& y, const StftConfig& cfg, const FitOptions& fit = {})
{
    const auto g = normalize(magnitude_matrix(y, cfg));
    Image img = fit.grayscale ? gray_image(g) : jet_map(g);
    if (fit.target == 0)
        return img;
    return fit_to_input(img, fit.target, fit.mode);
}

// Sum of each row of G across time (frequency profile).
inline std::vector<double> row_energy(const SpectrogramMatrix& g)
{
    std::vector<double> e(g.rows, 0.0);
    for (std::size_t r = 0; r < g.rows; ++r)
        for (std::size_t c = 0; c < g.cols; ++c)
            e[r] += g.at(r, c);
    return e;
}

} // namespace modclass
