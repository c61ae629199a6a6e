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

// Compact convolutional classifier with training and inference.
//
// Network<T> is a chain of layers over CHW tensors of scalar type T. All
// trainable parameters live in one flat buffer owned by the network; each
// layer addresses its slice by offset. Training uses float; double is used for
// finite-difference gradient checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "decision.hpp"
#include "error.hpp"
#include "image_io.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "tfa.hpp"

namespace modclass::cnn {

struct Shape {
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t size() const { return static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
    friend bool operator==(const Shape&, const Shape&) = default;

    std::string str() const { return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c); }
};

enum class LayerKind : std::uint32_t { Conv2D = 1, ReLU = 2, MaxPool = 3, Dropout = 4, Dense = 5, Softmax = 6 };

enum class Mode { Inference, Training };

// Per-sample scratch a layer keeps between forward and backward.
// Eigen picks its vector peeling from the buffer address, so every buffer it
// touches is allocated on the maximum alignment. Otherwise the summation order,
// and the low bits of the result, depend on where the heap put the buffer.
template <class T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

template <class T>
struct LayerState {
    Buffer<T> buffer;               // im2col columns or dropout mask
    Buffer<T> scratch;              // conv input-gradient columns
    std::vector<std::uint32_t> index; // max-pool argmax
};

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <class T>
using VectorMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using ConstVectorMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <class T>
class Layer {
public:
    explicit Layer(Shape in) : in_(in) {}
    virtual ~Layer() = default;

    virtual LayerKind kind() const = 0;
    virtual Shape output_shape() const = 0;
    virtual std::size_t param_count() const { return 0; }
    virtual std::unique_ptr<Layer> clone() const = 0;
    virtual std::string describe() const = 0;

    // He-normal weights, zero biases.
    virtual void initialize(std::span<T>, Rng&) const {}

    virtual void forward(std::span<const T> params, const T* in, T* out, LayerState<T>& st, Mode mode, Rng* rng) const = 0;

    // Accumulates parameter gradients into `grad` and writes the input
    // gradient to `din` unless it is null.
    virtual void backward(std::span<const T> params, const T* in, const T* out, const T* dout, T* din, LayerState<T>& st,
                          std::span<T> grad) const = 0;

    Shape input_shape() const { return in_; }
    std::size_t param_offset() const { return offset_; }
    void set_param_offset(std::size_t off) { offset_ = off; }

protected:
    Shape in_;
    std::size_t offset_ = 0;
};

// 'Same' convolution, stride 1, odd square kernel, via im2col + GEMM.
// Parameters: weights [out_c][in_c*k*k] then bias [out_c].
template <class T>
class Conv2D final : public Layer<T> {
public:
    Conv2D(Shape in, int out_channels, int kernel) : Layer<T>(in), out_c_(out_channels), k_(kernel)
    {
        if (kernel < 1 || kernel % 2 == 0)
            throw ConfigError("conv kernel must be odd and positive");
        if (out_channels < 1)
            throw ConfigError("conv needs at least one output channel");
    }

    LayerKind kind() const override { return LayerKind::Conv2D; }
    Shape output_shape() const override { return {out_c_, this->in_.h, this->in_.w}; }
    std::size_t param_count() const override { return static_cast<std::size_t>(out_c_) * (patch() + 1); }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2D>(*this); }
    std::string describe() const override { return "conv " + std::to_string(k_) + "x" + std::to_string(k_) + "x" + std::to_string(out_c_); }

    int out_channels() const { return out_c_; }
    int kernel() const { return k_; }

    void initialize(std::span<T> p, Rng& rng) const override
    {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(patch())));
        const std::size_t nw = static_cast<std::size_t>(out_c_) * patch();
        for (std::size_t i = 0; i < nw; ++i)
            p[i] = static_cast<T>(dist(rng));
        std::fill(p.begin() + static_cast<std::ptrdiff_t>(nw), p.end(), T(0));
    }

    void forward(std::span<const T> p, const T* in, T* out, LayerState<T>& st, Mode, Rng*) const override
    {
        const auto hw = static_cast<Eigen::Index>(this->in_.h) * this->in_.w;
        im2col(in, st.buffer);
        ConstMatrixMap<T> w(p.data(), out_c_, static_cast<Eigen::Index>(patch()));
        ConstVectorMap<T> b(p.data() + static_cast<std::ptrdiff_t>(out_c_ * patch()), out_c_);
        ConstMatrixMap<T> cols(st.buffer.data(), static_cast<Eigen::Index>(patch()), hw);
        MatrixMap<T> y(out, out_c_, hw);
        y.noalias() = w * cols;
        y.colwise() += b;
    }

    void backward(std::span<const T> p, const T*, const T*, const T* dout, T* din, LayerState<T>& st,
                  std::span<T> grad) const override
    {
        const auto hw = static_cast<Eigen::Index>(this->in_.h) * this->in_.w;
        const auto kk = static_cast<Eigen::Index>(patch());
        ConstMatrixMap<T> dy(dout, out_c_, hw);
        ConstMatrixMap<T> cols(st.buffer.data(), kk, hw);
        MatrixMap<T> dw(grad.data(), out_c_, kk);
        VectorMap<T> db(grad.data() + static_cast<std::ptrdiff_t>(out_c_ * patch()), out_c_);
        dw.noalias() += dy * cols.transpose();
        db += dy.rowwise().sum();
        if (din == nullptr)
            return;
        ConstMatrixMap<T> w(p.data(), out_c_, kk);
        st.scratch.resize(static_cast<std::size_t>(kk * hw));
        MatrixMap<T> dc(st.scratch.data(), kk, hw);
        dc.noalias() = w.transpose() * dy;
        col2im(st.scratch, din);
    }

private:
    std::size_t patch() const { return static_cast<std::size_t>(this->in_.c) * static_cast<std::size_t>(k_ * k_); }

    void im2col(const T* in, Buffer<T>& cols) const
    {
        const int h = this->in_.h, w = this->in_.w, pad = k_ / 2;
        cols.assign(patch() * static_cast<std::size_t>(h * w), T(0));
        std::size_t row = 0;
        for (int c = 0; c < this->in_.c; ++c)
            for (int ky = 0; ky < k_; ++ky)
                for (int kx = 0; kx < k_; ++kx, ++row) {
                    T* dst = cols.data() + row * static_cast<std::size_t>(h * w);
                    const T* src = in + static_cast<std::ptrdiff_t>(c) * h * w;
                    for (int y = 0; y < h; ++y) {
                        const int iy = y + ky - pad;
                        if (iy < 0 || iy >= h)
                            continue;
                        const int x0 = std::max(0, pad - kx);
                        const int x1 = std::min(w, w + pad - kx);
                        for (int x = x0; x < x1; ++x)
                            dst[y * w + x] = src[iy * w + x + kx - pad];
                    }
                }
    }

    void col2im(const Buffer<T>& cols, T* din) const
    {
        const int h = this->in_.h, w = this->in_.w, pad = k_ / 2;
        std::fill(din, din + this->in_.size(), T(0));
        std::size_t row = 0;
        for (int c = 0; c < this->in_.c; ++c)
            for (int ky = 0; ky < k_; ++ky)
                for (int kx = 0; kx < k_; ++kx, ++row) {
                    const T* src = cols.data() + row * static_cast<std::size_t>(h * w);
                    T* dst = din + static_cast<std::ptrdiff_t>(c) * h * w;
                    for (int y = 0; y < h; ++y) {
                        const int iy = y + ky - pad;
                        if (iy < 0 || iy >= h)
                            continue;
                        const int x0 = std::max(0, pad - kx);
                        const int x1 = std::min(w, w + pad - kx);
                        for (int x = x0; x < x1; ++x)
                            dst[iy * w + x + kx - pad] += src[y * w + x];
                    }
                }
    }

    int out_c_;
    int k_;
};

template <class T>
class ReLU final : public Layer<T> {
public:
    using Layer<T>::Layer;
    LayerKind kind() const override { return LayerKind::ReLU; }
    Shape output_shape() const override { return this->in_; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ReLU>(*this); }
    std::string describe() const override { return "relu"; }

    void forward(std::span<const T>, const T* in, T* out, LayerState<T>&, Mode, Rng*) const override
    {
        const std::size_t n = this->in_.size();
        for (std::size_t i = 0; i < n; ++i)
            out[i] = in[i] > T(0) ? in[i] : T(0);
    }

    void backward(std::span<const T>, const T* in, const T*, const T* dout, T* din, LayerState<T>&, std::span<T>) const override
    {
        if (din == nullptr)
            return;
        const std::size_t n = this->in_.size();
        for (std::size_t i = 0; i < n; ++i)
            din[i] = in[i] > T(0) ? dout[i] : T(0);
    }
};

// Non-overlapping max pooling (window = stride = size); trailing rows/columns dropped.
template <class T>
class MaxPool final : public Layer<T> {
public:
    MaxPool(Shape in, int size) : Layer<T>(in), s_(size)
    {
        if (size < 1 || in.h < size || in.w < size)
            throw ConfigError("max-pool window " + std::to_string(size) + " does not fit input " + in.str());
    }
    LayerKind kind() const override { return LayerKind::MaxPool; }
    Shape output_shape() const override { return {this->in_.c, this->in_.h / s_, this->in_.w / s_}; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPool>(*this); }
    std::string describe() const override { return "maxpool " + std::to_string(s_); }
    int size() const { return s_; }

    void forward(std::span<const T>, const T* in, T* out, LayerState<T>& st, Mode, Rng*) const override
    {
        const Shape o = output_shape();
        st.index.resize(o.size());
        std::size_t oi = 0;
        for (int c = 0; c < o.c; ++c)
            for (int y = 0; y < o.h; ++y)
                for (int x = 0; x < o.w; ++x, ++oi) {
                    std::size_t best = (static_cast<std::size_t>(c) * this->in_.h + static_cast<std::size_t>(y * s_)) * this->in_.w +
                                       static_cast<std::size_t>(x * s_);
                    for (int dy = 0; dy < s_; ++dy)
                        for (int dx = 0; dx < s_; ++dx) {
                            const std::size_t i = (static_cast<std::size_t>(c) * this->in_.h + static_cast<std::size_t>(y * s_ + dy)) *
                                                      this->in_.w +
                                                  static_cast<std::size_t>(x * s_ + dx);
                            if (in[i] > in[best])
                                best = i;
                        }
                    st.index[oi] = static_cast<std::uint32_t>(best);
                    out[oi] = in[best];
                }
    }

    void backward(std::span<const T>, const T*, const T*, const T* dout, T* din, LayerState<T>& st, std::span<T>) const override
    {
        if (din == nullptr)
            return;
        std::fill(din, din + this->in_.size(), T(0));
        for (std::size_t oi = 0; oi < st.index.size(); ++oi)
            din[st.index[oi]] += dout[oi];
    }

private:
    int s_;
};

// Inverted dropout: training scales kept units by 1/(1-rate); inference is identity.
template <class T>
class Dropout final : public Layer<T> {
public:
    Dropout(Shape in, double rate) : Layer<T>(in) { set_rate(rate); }
    LayerKind kind() const override { return LayerKind::Dropout; }
    Shape output_shape() const override { return this->in_; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dropout>(*this); }
    std::string describe() const override { return "dropout " + std::to_string(rate_); }
    double rate() const { return rate_; }
    void set_rate(double rate)
    {
        if (!(rate >= 0.0 && rate < 1.0))
            throw ConfigError("dropout rate must lie in [0, 1)");
        rate_ = rate;
    }

    void forward(std::span<const T>, const T* in, T* out, LayerState<T>& st, Mode mode, Rng* rng) const override
    {
        const std::size_t n = this->in_.size();
        st.buffer.assign(n, T(1));
        if (mode == Mode::Training && rate_ > 0.0) {
            if (rng == nullptr)
                throw ConfigError("dropout in training mode needs a random generator");
            std::uniform_real_distribution<double> u(0.0, 1.0);
            const T keep = static_cast<T>(1.0 / (1.0 - rate_));
            for (auto& m : st.buffer)
                m = u(*rng) >= rate_ ? keep : T(0);
        }
        for (std::size_t i = 0; i < n; ++i)
            out[i] = in[i] * st.buffer[i];
    }

    void backward(std::span<const T>, const T*, const T*, const T* dout, T* din, LayerState<T>& st, std::span<T>) const override
    {
        if (din == nullptr)
            return;
        for (std::size_t i = 0; i < st.buffer.size(); ++i)
            din[i] = dout[i] * st.buffer[i];
    }

private:
    double rate_ = 0.5;
};

// Fully connected layer on the flattened input. Parameters: weights [out][in] then bias [out].
template <class T>
class Dense final : public Layer<T> {
public:
    Dense(Shape in, int outputs) : Layer<T>(in), out_(outputs)
    {
        if (outputs < 1)
            throw ConfigError("dense layer needs at least one output");
    }
    LayerKind kind() const override { return LayerKind::Dense; }
    Shape output_shape() const override { return {out_, 1, 1}; }
    std::size_t param_count() const override { return static_cast<std::size_t>(out_) * (this->in_.size() + 1); }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dense>(*this); }
    std::string describe() const override { return "dense " + std::to_string(out_); }
    int outputs() const { return out_; }

    void initialize(std::span<T> p, Rng& rng) const override
    {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(this->in_.size())));
        const std::size_t nw = static_cast<std::size_t>(out_) * this->in_.size();
        for (std::size_t i = 0; i < nw; ++i)
            p[i] = static_cast<T>(dist(rng));
        std::fill(p.begin() + static_cast<std::ptrdiff_t>(nw), p.end(), T(0));
    }

    void forward(std::span<const T> p, const T* in, T* out, LayerState<T>&, Mode, Rng*) const override
    {
        const auto n_in = static_cast<Eigen::Index>(this->in_.size());
        ConstMatrixMap<T> w(p.data(), out_, n_in);
        ConstVectorMap<T> b(p.data() + static_cast<std::ptrdiff_t>(out_) * n_in, out_);
        ConstVectorMap<T> x(in, n_in);
        VectorMap<T> y(out, out_);
        y.noalias() = w * x;
        y += b;
    }

    void backward(std::span<const T> p, const T* in, const T*, const T* dout, T* din, LayerState<T>&, std::span<T> grad) const override
    {
        const auto n_in = static_cast<Eigen::Index>(this->in_.size());
        ConstVectorMap<T> x(in, n_in);
        ConstVectorMap<T> dy(dout, out_);
        MatrixMap<T> dw(grad.data(), out_, n_in);
        VectorMap<T> db(grad.data() + static_cast<std::ptrdiff_t>(out_) * n_in, out_);
        dw.noalias() += dy * x.transpose();
        db += dy;
        if (din == nullptr)
            return;
        ConstMatrixMap<T> w(p.data(), out_, n_in);
        VectorMap<T> dx(din, n_in);
        dx.noalias() = w.transpose() * dy;
    }

private:
    int out_;
};

// Max-subtracted softmax over the flattened input.
template <class T>
class Softmax final : public Layer<T> {
public:
    using Layer<T>::Layer;
    LayerKind kind() const override { return LayerKind::Softmax; }
    Shape output_shape() const override { return this->in_; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Softmax>(*this); }
    std::string describe() const override { return "softmax"; }

    void forward(std::span<const T>, const T* in, T* out, LayerState<T>&, Mode, Rng*) const override
    {
        const std::size_t n = this->in_.size();
        const T mx = *std::max_element(in, in + n);
        T sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = std::exp(in[i] - mx);
            sum += out[i];
        }
        for (std::size_t i = 0; i < n; ++i)
            out[i] /= sum;
    }

    void backward(std::span<const T>, const T*, const T* out, const T* dout, T* din, LayerState<T>&, std::span<T>) const override
    {
        if (din == nullptr)
            return;
        const std::size_t n = this->in_.size();
        T dot = 0;
        for (std::size_t i = 0; i < n; ++i)
            dot += dout[i] * out[i];
        for (std::size_t i = 0; i < n; ++i)
            din[i] = out[i] * (dout[i] - dot);
    }
};

// Activations and layer scratch for one sample in flight.
template <class T>
struct Workspace {
    std::vector<Buffer<T>> acts; // acts[0] = input, acts[i+1] = output of layer i
    std::vector<LayerState<T>> states;
    Buffer<T> delta_a;
    Buffer<T> delta_b;
};

template <class T>
class Network {
public:
    Network() = default;
    explicit Network(Shape input) : input_(input)
    {
        if (input.c < 1 || input.h < 1 || input.w < 1)
            throw ConfigError("network input shape must be positive, got " + input.str());
    }

    Network(const Network& other) : input_(other.input_), params_(other.params_)
    {
        layers_.reserve(other.layers_.size());
        for (const auto& l : other.layers_)
            layers_.push_back(l->clone());
    }
    Network& operator=(const Network& other)
    {
        if (this != &other) {
            Network tmp(other);
            *this = std::move(tmp);
        }
        return *this;
    }
    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    Network& conv(int out_channels, int kernel = 3) { return add(std::make_unique<Conv2D<T>>(output_shape(), out_channels, kernel)); }
    Network& relu() { return add(std::make_unique<ReLU<T>>(output_shape())); }
    Network& maxpool(int size = 2) { return add(std::make_unique<MaxPool<T>>(output_shape(), size)); }
    Network& dropout(double rate) { return add(std::make_unique<Dropout<T>>(output_shape(), rate)); }
    Network& dense(int outputs) { return add(std::make_unique<Dense<T>>(output_shape(), outputs)); }
    Network& softmax() { return add(std::make_unique<Softmax<T>>(output_shape())); }

    Shape input_shape() const { return input_; }
    Shape output_shape() const { return layers_.empty() ? input_ : layers_.back()->output_shape(); }
    int num_classes() const { return static_cast<int>(output_shape().size()); }

    std::size_t num_layers() const { return layers_.size(); }
    const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }
    Layer<T>& layer(std::size_t i) { return *layers_[i]; }

    std::span<T> params() { return params_; }
    std::span<const T> params() const { return params_; }
    std::span<T> layer_params(std::size_t i)
    {
        return std::span<T>(params_).subspan(layers_[i]->param_offset(), layers_[i]->param_count());
    }
    std::span<const T> layer_params(std::size_t i) const
    {
        return std::span<const T>(params_).subspan(layers_[i]->param_offset(), layers_[i]->param_count());
    }

    void initialize(std::uint64_t seed)
    {
        Rng rng(seed);
        for (std::size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->initialize(layer_params(i), rng);
    }

    void set_dropout_rate(double rate)
    {
        for (auto& l : layers_)
            if (auto* d = dynamic_cast<Dropout<T>*>(l.get()))
                d->set_rate(rate);
    }

    Workspace<T> make_workspace() const
    {
        Workspace<T> ws;
        ws.acts.resize(layers_.size() + 1);
        ws.acts[0].resize(input_.size());
        for (std::size_t i = 0; i < layers_.size(); ++i)
            ws.acts[i + 1].resize(layers_[i]->output_shape().size());
        ws.states.resize(layers_.size());
        return ws;
    }

    // Runs every layer on ws.acts[0]; returns the final activation.
    std::span<const T> forward(Workspace<T>& ws, Mode mode, Rng* rng) const
    {
        for (std::size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->forward(layer_params(i), ws.acts[i].data(), ws.acts[i + 1].data(), ws.states[i], mode, rng);
        return ws.acts.back();
    }

    // Backpropagates `dlast` (gradient w.r.t. the output of layer `last`)
    // through layers last..0, accumulating into `grad` (size = params().size()).
    void backward(Workspace<T>& ws, std::size_t last, std::span<const T> dlast, std::span<T> grad, Buffer<T>* dinput = nullptr) const
    {
        ws.delta_a.assign(dlast.begin(), dlast.end());
        for (std::size_t step = 0; step <= last; ++step) {
            const std::size_t i = last - step;
            const auto& l = *layers_[i];
            T* din = nullptr;
            if (i > 0 || dinput != nullptr) {
                ws.delta_b.resize(l.input_shape().size());
                din = ws.delta_b.data();
            }
            l.backward(layer_params(i), ws.acts[i].data(), ws.acts[i + 1].data(), ws.delta_a.data(), din, ws.states[i],
                       grad.subspan(l.param_offset(), l.param_count()));
            if (din != nullptr)
                std::swap(ws.delta_a, ws.delta_b);
        }
        if (dinput != nullptr)
            *dinput = ws.delta_a;
    }

private:
    Network& add(std::unique_ptr<Layer<T>> layer)
    {
        if (input_.size() == 0)
            throw ConfigError("network has no input shape");
        if (layer->output_shape().size() == 0)
            throw ConfigError("layer '" + layer->describe() + "' produces an empty output from " + layer->input_shape().str());
        layer->set_param_offset(params_.size());
        params_.resize(params_.size() + layer->param_count(), T(0));
        layers_.push_back(std::move(layer));
        return *this;
    }

    Shape input_{};
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    Buffer<T> params_;
};

using Model = Network<float>;

// Default architecture: three conv(3x3)-relu-maxpool(2) blocks with 16, 32 and
// 64 filters, dense 128, relu, dropout, dense K, softmax.
template <class T = float>
Network<T> build_model(Shape input, int num_classes, std::uint64_t seed, double dropout_rate = 0.5)
{
    if (input.h < 32 || input.w < 32)
        throw ConfigError("build_model: input must be at least 32x32, got " + input.str());
    if (input.c < 1)
        throw ConfigError("build_model: input needs at least one channel");
    if (num_classes < 2)
        throw ConfigError("build_model: need at least two classes");
    Network<T> net(input);
    net.conv(16).relu().maxpool(2);
    net.conv(32).relu().maxpool(2);
    net.conv(64).relu().maxpool(2);
    net.dense(128).relu().dropout(dropout_rate);
    net.dense(num_classes).softmax();
    net.initialize(seed);
    return net;
}

// HWC float image -> CHW tensor.
template <class T>
void image_to_chw(const Image& img, std::span<T> out)
{
    const std::size_t hw = img.height * img.width;
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < img.channels; ++c)
                out[c * hw + y * img.width + x] = static_cast<T>(img.at(y, x, c));
}

template <class T>
void check_input(const Network<T>& net, const Image& img)
{
    const Shape s = net.input_shape();
    if (img.height != static_cast<std::size_t>(s.h) || img.width != static_cast<std::size_t>(s.w) ||
        img.channels != static_cast<std::size_t>(s.c))
        throw DataError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) + "x" + std::to_string(img.channels) +
                        " does not match model input " + s.str());
}

// Inference-mode class probabilities for one image. Safe to call concurrently.
template <class T>
DecisionVector forward(const Network<T>& net, const Image& img)
{
    check_input(net, img);
    auto ws = net.make_workspace();
    image_to_chw<T>(img, ws.acts[0]);
    auto out = net.forward(ws, Mode::Inference, nullptr);
    DecisionVector d;
    d.probs.assign(out.begin(), out.end());
    return d;
}

template <class T>
struct Example {
    std::vector<T> input; // CHW
    int label = 0;
};

namespace detail {

// Log-softmax cross-entropy on the logits feeding the final softmax, then
// backprop of (p - onehot). Returns the sample loss.
template <class T>
double accumulate_sample(const Network<T>& net, Workspace<T>& ws, int label, Mode mode, Rng* rng, std::span<T> grad)
{
    const std::size_t nl = net.num_layers();
    if (nl == 0 || net.layer(nl - 1).kind() != LayerKind::Softmax)
        throw ConfigError("loss requires a network ending in softmax");
    const auto probs = net.forward(ws, mode, rng);
    const auto& logits = ws.acts[nl - 1];
    if (label < 0 || static_cast<std::size_t>(label) >= probs.size())
        throw DataError("label " + std::to_string(label) + " outside [0, " + std::to_string(probs.size()) + ")");
    double mx = -std::numeric_limits<double>::infinity();
    for (T z : logits)
        mx = std::max(mx, static_cast<double>(z));
    double sum = 0.0;
    for (T z : logits)
        sum += std::exp(static_cast<double>(z) - mx);
    const double loss = mx + std::log(sum) - static_cast<double>(logits[static_cast<std::size_t>(label)]);
    std::vector<T> dlogits(probs.begin(), probs.end());
    dlogits[static_cast<std::size_t>(label)] -= T(1);
    if (nl >= 2)
        net.backward(ws, nl - 2, dlogits, grad);
    return loss;
}

} // namespace detail

template <class T>
struct Gradients {
    double loss = 0.0;
    Buffer<T> grads;
};

// Mean cross-entropy over `batch` and its gradient for every parameter.
// Dropout layers run in training mode when `rng` is given, otherwise as identity.
template <class T>
Gradients<T> loss_and_grads(const Network<T>& net, std::span<const Example<T>> batch, Rng* rng = nullptr)
{
    if (batch.empty())
        throw DataError("loss_and_grads: empty batch");
    Gradients<T> g;
    g.grads.assign(net.params().size(), T(0));
    auto ws = net.make_workspace();
    for (const auto& ex : batch) {
        if (ex.input.size() != net.input_shape().size())
            throw DataError("loss_and_grads: input size mismatch");
        std::copy(ex.input.begin(), ex.input.end(), ws.acts[0].begin());
        g.loss += detail::accumulate_sample(net, ws, ex.label, rng ? Mode::Training : Mode::Inference, rng, std::span<T>(g.grads));
    }
    const T scale = T(1) / static_cast<T>(batch.size());
    g.loss /= static_cast<double>(batch.size());
    for (auto& v : g.grads)
        v *= scale;
    return g;
}

struct TrainConfig {
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double dropout_rate = 0.5;
    std::uint64_t seed = 1;
    double validation_fraction = 0.1;
};

inline void validate(const TrainConfig& c)
{
    if (c.epochs < 0)
        throw ConfigError("epochs must be >= 0");
    if (c.batch_size < 1)
        throw ConfigError("batch_size must be >= 1");
    if (!(c.learning_rate >= 0.0))
        throw ConfigError("learning_rate must be >= 0");
    if (!(c.momentum >= 0.0 && c.momentum < 1.0))
        throw ConfigError("momentum must lie in [0, 1)");
    if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0))
        throw ConfigError("dropout_rate must lie in [0, 1)");
    if (!(c.validation_fraction >= 0.0 && c.validation_fraction < 1.0))
        throw ConfigError("validation_fraction must lie in [0, 1)");
}

struct Sample {
    Image image;
    int label = 0;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_acc = std::numeric_limits<double>::quiet_NaN(); // NaN without a validation split
};

using History = std::vector<EpochRecord>;

// Gradients of a batch are accumulated in this many fixed index blocks and
// summed in block order, so results do not depend on the worker count.
inline constexpr std::size_t kReductionBlocks = 4;

template <class T>
int predict(const Network<T>& net, const Image& img)
{
    const auto d = forward(net, img);
    return static_cast<int>(std::max_element(d.probs.begin(), d.probs.end()) - d.probs.begin());
}

template <class T>
double accuracy(const Network<T>& net, std::span<const Sample> data, std::span<const std::size_t> indices)
{
    if (indices.empty())
        return std::numeric_limits<double>::quiet_NaN();
    std::vector<int> hit(indices.size(), 0);
    parallel_for(indices.size(), [&](std::size_t i) {
        const auto& s = data[indices[i]];
        hit[i] = predict(net, s.image) == s.label ? 1 : 0;
    });
    return static_cast<double>(std::accumulate(hit.begin(), hit.end(), 0)) / static_cast<double>(indices.size());
}

// Minibatch SGD with momentum on mean cross-entropy. Deterministic for a given
// (seed, data order). `on_epoch` is called after each epoch.
template <class T>
History train(Network<T>& net, std::span<const Sample> data, const TrainConfig& cfg,
              const std::function<void(const EpochRecord&)>& on_epoch = {})
{
    validate(cfg);
    if (data.empty())
        throw DataError("train: empty dataset");
    const int k = net.num_classes();
    for (const auto& s : data) {
        if (s.label < 0 || s.label >= k)
            throw DataError("train: label " + std::to_string(s.label) + " outside [0, " + std::to_string(k) + ")");
        check_input(net, s.image);
    }
    net.set_dropout_rate(cfg.dropout_rate);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    {
        Rng split_rng(derive_seed(cfg.seed, 0));
        std::shuffle(order.begin(), order.end(), split_rng);
    }
    const auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(data.size())));
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    if (tr.empty())
        throw DataError("train: validation split leaves no training samples");

    const std::size_t np = net.params().size();
    std::vector<T> velocity(np, T(0));
    std::vector<Buffer<T>> block_grads(kReductionBlocks, Buffer<T>(np));
    std::vector<double> block_loss(kReductionBlocks);
    std::vector<Workspace<T>> workspaces;
    for (std::size_t b = 0; b < kReductionBlocks; ++b)
        workspaces.push_back(net.make_workspace());
    Buffer<T> grad(np);

    History history;
    std::uint64_t sample_counter = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng epoch_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        std::shuffle(tr.begin(), tr.end(), epoch_rng);
        double epoch_loss = 0.0;

        for (std::size_t start = 0; start < tr.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(tr.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::size_t bs = end - start;
            const std::uint64_t base_counter = sample_counter;
            parallel_for(kReductionBlocks, [&](std::size_t b) {
                auto& g = block_grads[b];
                std::fill(g.begin(), g.end(), T(0));
                block_loss[b] = 0.0;
                auto& ws = workspaces[b];
                const std::size_t lo = start + bs * b / kReductionBlocks;
                const std::size_t hi = start + bs * (b + 1) / kReductionBlocks;
                for (std::size_t i = lo; i < hi; ++i) {
                    const auto& s = data[tr[i]];
                    image_to_chw<T>(s.image, ws.acts[0]);
                    Rng drop_rng(derive_seed(~cfg.seed, base_counter + (i - start)));
                    block_loss[b] += detail::accumulate_sample(net, ws, s.label, Mode::Training, &drop_rng, std::span<T>(g));
                }
            });
            sample_counter += bs;

            std::fill(grad.begin(), grad.end(), T(0));
            double batch_loss = 0.0;
            for (std::size_t b = 0; b < kReductionBlocks; ++b) {
                for (std::size_t i = 0; i < np; ++i)
                    grad[i] += block_grads[b][i];
                batch_loss += block_loss[b];
            }
            if (!std::isfinite(batch_loss))
                throw NumericError("train: non-finite loss in epoch " + std::to_string(epoch));
            epoch_loss += batch_loss;

            const T lr = static_cast<T>(cfg.learning_rate);
            const T mu = static_cast<T>(cfg.momentum);
            const T inv = T(1) / static_cast<T>(bs);
            auto p = net.params();
            for (std::size_t i = 0; i < np; ++i) {
                velocity[i] = mu * velocity[i] - lr * (grad[i] * inv);
                p[i] += velocity[i];
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(tr.size());
        rec.val_acc = accuracy(net, data, val);
        history.push_back(rec);
        if (on_epoch)
            on_epoch(rec);
    }
    return history;
}

inline void write_history_csv(const std::filesystem::path& path, const History& h)
{
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write " + path.string());
    out.precision(17);
    out << "epoch,train_loss,val_acc\n";
    for (const auto& r : h)
        out << r.epoch << ',' << r.train_loss << ',' << r.val_acc << '\n';
}

// Model file: "CNN1" | u32 version | u32 c,h,w | u32 layer count | per layer:
// u32 kind + kind-specific fields | u32 parameter count | float32 parameters.
inline constexpr std::uint32_t kModelFormatVersion = 1;

template <class T>
std::vector<unsigned char> encode_model(const Network<T>& net)
{
    std::vector<unsigned char> out{'C', 'N', 'N', '1'};
    io::put_u32(out, kModelFormatVersion);
    const Shape in = net.input_shape();
    io::put_u32(out, static_cast<std::uint32_t>(in.c));
    io::put_u32(out, static_cast<std::uint32_t>(in.h));
    io::put_u32(out, static_cast<std::uint32_t>(in.w));
    io::put_u32(out, static_cast<std::uint32_t>(net.num_layers()));
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
        const auto& l = net.layer(i);
        io::put_u32(out, static_cast<std::uint32_t>(l.kind()));
        switch (l.kind()) {
        case LayerKind::Conv2D: {
            const auto& c = static_cast<const Conv2D<T>&>(l);
            io::put_u32(out, static_cast<std::uint32_t>(c.out_channels()));
            io::put_u32(out, static_cast<std::uint32_t>(c.kernel()));
            break;
        }
        case LayerKind::MaxPool: io::put_u32(out, static_cast<std::uint32_t>(static_cast<const MaxPool<T>&>(l).size())); break;
        case LayerKind::Dropout: io::put_f32(out, static_cast<float>(static_cast<const Dropout<T>&>(l).rate())); break;
        case LayerKind::Dense: io::put_u32(out, static_cast<std::uint32_t>(static_cast<const Dense<T>&>(l).outputs())); break;
        case LayerKind::ReLU:
        case LayerKind::Softmax: break;
        }
    }
    io::put_u32(out, static_cast<std::uint32_t>(net.params().size()));
    for (T v : net.params())
        io::put_f32(out, static_cast<float>(v));
    return out;
}

template <class T = float>
Network<T> decode_model(std::vector<unsigned char> bytes, const std::string& source = "model")
{
    io::ByteReader r(std::move(bytes), source);
    r.expect_magic("CNN1");
    const std::uint32_t version = r.u32("version");
    if (version != kModelFormatVersion)
        throw DataError(source + ": unsupported model format version " + std::to_string(version) + " (expected " +
                        std::to_string(kModelFormatVersion) + ")");
    Shape in;
    in.c = static_cast<int>(r.u32("input channels"));
    in.h = static_cast<int>(r.u32("input height"));
    in.w = static_cast<int>(r.u32("input width"));
    if (in.size() == 0 || in.size() > (std::size_t{1} << 28))
        r.fail("implausible input shape " + in.str());
    const std::uint32_t n_layers = r.u32("layer count");
    if (n_layers > 1024)
        r.fail("implausible layer count " + std::to_string(n_layers));
    Network<T> net(in);
    try {
        for (std::uint32_t i = 0; i < n_layers; ++i) {
            const auto kind = static_cast<LayerKind>(r.u32("layer kind"));
            switch (kind) {
            case LayerKind::Conv2D: {
                const auto oc = r.u32("conv channels");
                const auto k = r.u32("conv kernel");
                net.conv(static_cast<int>(oc), static_cast<int>(k));
                break;
            }
            case LayerKind::ReLU: net.relu(); break;
            case LayerKind::MaxPool: net.maxpool(static_cast<int>(r.u32("pool size"))); break;
            case LayerKind::Dropout: net.dropout(r.f32("dropout rate")); break;
            case LayerKind::Dense: net.dense(static_cast<int>(r.u32("dense outputs"))); break;
            case LayerKind::Softmax: net.softmax(); break;
            default: r.fail("unknown layer kind " + std::to_string(static_cast<std::uint32_t>(kind)));
            }
        }
    } catch (const ConfigError& e) {
        r.fail(std::string("invalid layer: ") + e.what());
    }
    const std::uint32_t count = r.u32("parameter count");
    if (count != net.params().size())
        r.fail("parameter count " + std::to_string(count) + " does not match architecture (" + std::to_string(net.params().size()) + ")");
    std::vector<T> values(count);
    for (auto& v : values)
        v = static_cast<T>(r.f32("parameters"));
    if (!r.at_end())
        r.fail("trailing bytes after parameters");
    std::copy(values.begin(), values.end(), net.params().begin());
    return net;
}

template <class T>
void save_model(const Network<T>& net, const std::filesystem::path& path)
{
    io::write_file(path, encode_model(net));
}

template <class T = float>
Network<T> load_model(const std::filesystem::path& path)
{
    return decode_model<T>(io::read_file(path), path.string());
}

} // namespace modclass::cnn
