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

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "error.hpp"

namespace modclass {

// In-place iterative radix-2 decimation-in-time FFT, forward sign e^{-j2pi nk/N}.
class FftPlan {
public:
    explicit FftPlan(std::size_t n) : n_(n)
    {
        if (n < 2 || (n & (n - 1)) != 0)
            throw ConfigError("FFT size must be a power of two >= 2");
        bitrev_.resize(n);
        std::size_t bits = 0;
        while ((std::size_t{1} << bits) < n)
            ++bits;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t r = 0;
            for (std::size_t b = 0; b < bits; ++b)
                if (i & (std::size_t{1} << b))
                    r |= std::size_t{1} << (bits - 1 - b);
            bitrev_[i] = r;
        }
        // Twiddles stored stage by stage: stage with span `len` starts at
        // offset len/2 - 1 and holds e^{-j2pi k/len} for k < len/2.
        twiddle_.resize(n - 1);
        for (std::size_t len = 2; len <= n; len <<= 1)
            for (std::size_t k = 0; k < len / 2; ++k) {
                double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
                twiddle_[len / 2 - 1 + k] = {std::cos(a), std::sin(a)};
            }
    }

    std::size_t size() const { return n_; }

    void forward(std::span<std::complex<double>> data) const
    {
        if (data.size() != n_)
            throw ConfigError("FFT buffer size mismatch");
        for (std::size_t i = 0; i < n_; ++i)
            if (i < bitrev_[i])
                std::swap(data[i], data[bitrev_[i]]);
        for (std::size_t len = 2; len <= n_; len <<= 1) {
            const std::size_t half = len / 2;
            const std::complex<double>* tw = twiddle_.data() + (half - 1);
            for (std::size_t start = 0; start < n_; start += len) {
                std::complex<double>* lo = data.data() + start;
                std::complex<double>* hi = lo + half;
                for (std::size_t k = 0; k < half; ++k) {
                    const double wr = tw[k].real(), wi = tw[k].imag();
                    const double br = hi[k].real(), bi = hi[k].imag();
                    const double tr = wr * br - wi * bi;
                    const double ti = wr * bi + wi * br;
                    const double ar = lo[k].real(), ai = lo[k].imag();
                    hi[k] = {ar - tr, ai - ti};
                    lo[k] = {ar + tr, ai + ti};
                }
            }
        }
    }

private:
    std::size_t n_;
    std::vector<std::size_t> bitrev_;
    std::vector<std::complex<double>> twiddle_;
};

} // namespace modclass
