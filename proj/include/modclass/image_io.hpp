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

// Binary interchange formats:
//   raw image  "TFA1" | u32 height | u32 width | u32 channels | float32[h*w*c]   (little-endian, HWC row-major)
//   raw signal float32[n] little-endian samples
// plus an 8-bit PNG writer for inspection.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "error.hpp"
#include "tfa.hpp"

namespace modclass {

namespace io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

inline void put_f32(std::vector<unsigned char>& out, float v)
{
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline void put_u32_be(std::vector<unsigned char>& out, std::uint32_t v)
{
    for (int i = 3; i >= 0; --i)
        out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

// Bounds-checked little-endian reader that reports byte offsets on failure.
class ByteReader {
public:
    ByteReader(std::vector<unsigned char> bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

    std::size_t position() const { return pos_; }
    bool at_end() const { return pos_ == bytes_.size(); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void expect_magic(const char (&magic)[5])
    {
        need(4, "magic");
        if (std::memcmp(bytes_.data() + pos_, magic, 4) != 0)
            fail("bad magic, expected \"" + std::string(magic, 4) + "\"");
        pos_ += 4;
    }

    std::uint32_t u32(const char* what)
    {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += 4;
        return v;
    }

    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

    [[noreturn]] void fail(const std::string& msg) const
    {
        throw DataError(source_ + ": " + msg + " at byte offset " + std::to_string(pos_));
    }

private:
    void need(std::size_t n, const char* what) const
    {
        if (remaining() < n)
            fail(std::string("truncated while reading ") + what + " (need " + std::to_string(n) + " bytes, have " +
                 std::to_string(remaining()) + ")");
    }

    std::vector<unsigned char> bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

inline std::vector<unsigned char> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw DataError("write failed for " + path.string());
}

} // namespace io

inline std::vector<unsigned char> encode_raw_image(const Image& img)
{
    std::vector<unsigned char> out;
    out.reserve(16 + img.data.size() * 4);
    out.insert(out.end(), {'T', 'F', 'A', '1'});
    io::put_u32(out, static_cast<std::uint32_t>(img.height));
    io::put_u32(out, static_cast<std::uint32_t>(img.width));
    io::put_u32(out, static_cast<std::uint32_t>(img.channels));
    for (float v : img.data)
        io::put_f32(out, v);
    return out;
}

inline Image decode_raw_image(std::vector<unsigned char> bytes, const std::string& source = "raw image")
{
    io::ByteReader r(std::move(bytes), source);
    r.expect_magic("TFA1");
    const std::uint32_t h = r.u32("height");
    const std::uint32_t w = r.u32("width");
    const std::uint32_t c = r.u32("channels");
    const std::uint64_t count = std::uint64_t{h} * w * c;
    if (count * 4 != r.remaining())
        r.fail("payload size " + std::to_string(r.remaining()) + " does not match " + std::to_string(h) + "x" + std::to_string(w) +
               "x" + std::to_string(c) + " float32");
    Image img(h, w, c);
    for (auto& v : img.data)
        v = r.f32("pixel");
    return img;
}

inline void write_raw_image(const std::filesystem::path& path, const Image& img) { io::write_file(path, encode_raw_image(img)); }

inline Image read_raw_image(const std::filesystem::path& path) { return decode_raw_image(io::read_file(path), path.string()); }

inline void write_signal_f32(const std::filesystem::path& path, const RealSignal& s)
{
    std::vector<unsigned char> out;
    out.reserve(s.size() * 4);
    for (double v : s.samples)
        io::put_f32(out, static_cast<float>(v));
    io::write_file(path, out);
}

inline RealSignal read_signal_f32(const std::filesystem::path& path, double sample_rate_hz)
{
    auto bytes = io::read_file(path);
    if (bytes.size() % 4 != 0)
        throw DataError(path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of 4");
    io::ByteReader r(std::move(bytes), path.string());
    RealSignal s;
    s.sample_rate_hz = sample_rate_hz;
    s.samples.resize(r.remaining() / 4);
    for (auto& v : s.samples)
        v = r.f32("sample");
    return s;
}

// 8-bit PNG (grey for 1 channel, RGB for 3), rows written top to bottom in image order.
inline std::vector<unsigned char> encode_png(const Image& img)
{
    if (img.channels != 1 && img.channels != 3)
        throw ConfigError("PNG export supports 1 or 3 channels");
    if (img.height == 0 || img.width == 0)
        throw ConfigError("PNG export of an empty image");

    std::vector<unsigned char> raw;
    raw.reserve(img.height * (1 + img.width * img.channels));
    for (std::size_t y = 0; y < img.height; ++y) {
        raw.push_back(0); // filter: none
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < img.channels; ++c) {
                const double v = std::clamp(static_cast<double>(img.at(y, x, c)), 0.0, 1.0);
                raw.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
            }
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> z(zlen);
    if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw DataError("PNG: zlib compression failed");
    z.resize(zlen);

    std::vector<unsigned char> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    auto chunk = [&png](const char* type, const std::vector<unsigned char>& body) {
        io::put_u32_be(png, static_cast<std::uint32_t>(body.size()));
        const std::size_t type_pos = png.size();
        png.insert(png.end(), type, type + 4);
        png.insert(png.end(), body.begin(), body.end());
        uLong crc = crc32(0L, png.data() + type_pos, static_cast<uInt>(4 + body.size()));
        io::put_u32_be(png, static_cast<std::uint32_t>(crc));
    };
    std::vector<unsigned char> ihdr;
    io::put_u32_be(ihdr, static_cast<std::uint32_t>(img.width));
    io::put_u32_be(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.insert(ihdr.end(), {8, static_cast<unsigned char>(img.channels == 3 ? 2 : 0), 0, 0, 0});
    chunk("IHDR", ihdr);
    chunk("IDAT", z);
    chunk("IEND", {});
    return png;
}

inline void write_png(const std::filesystem::path& path, const Image& img) { io::write_file(path, encode_png(img)); }

} // namespace modclass
