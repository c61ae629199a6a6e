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

// Report files for a Metrics set, all prefixed `<scenario>_<set>`:
//   _accuracy.csv         snr_db,acc_no_fusion,acc_fused
//   _confusion.csv        snr_db,decision,true_class,predicted_class,count
//   _confusion_<snr>.png  row-normalized fused confusion heatmap per SNR
//   _accuracy.png         accuracy-vs-SNR plot

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "../error.hpp"
#include "../image_io.hpp"
#include "../tfa.hpp"
#include "evaluate.hpp"

namespace modclass::harness {

struct AccuracyRow {
    double snr_db = 0.0;
    double acc_no_fusion = 0.0;
    double acc_fused = 0.0;
};

inline std::string report_prefix(const Metrics& m) { return m.scenario + "_" + m.set_tag; }

namespace detail {

inline std::string fmt_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string snr_tag(double snr)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%g", snr < 0 ? "m" : "p", std::abs(snr));
    return buf;
}

inline void set_px(Image& img, long y, long x, const std::array<float, 3>& rgb)
{
    if (y < 0 || x < 0 || y >= static_cast<long>(img.height) || x >= static_cast<long>(img.width))
        return;
    for (std::size_t c = 0; c < 3; ++c)
        img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = rgb[c];
}

inline void draw_line(Image& img, long x0, long y0, long x1, long y1, const std::array<float, 3>& rgb)
{
    const long dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const long dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    while (true) {
        set_px(img, y0, x0, rgb);
        if (x0 == x1 && y0 == y1)
            break;
        const long e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

inline Image blank_rgb(std::size_t h, std::size_t w, float fill)
{
    Image img;
    img.height = h;
    img.width = w;
    img.channels = 3;
    img.data.assign(h * w * 3, fill);
    return img;
}

} // namespace detail

inline std::vector<AccuracyRow> accuracy_rows(const Metrics& m)
{
    std::vector<AccuracyRow> rows;
    for (const auto& r : m.per_snr)
        rows.push_back({r.snr_db, r.acc_no_fusion(), r.acc_fused()});
    return rows;
}

inline std::string accuracy_csv(const Metrics& m)
{
    std::string s = "snr_db,acc_no_fusion,acc_fused\n";
    for (const auto& r : accuracy_rows(m))
        s += detail::fmt_double(r.snr_db) + "," + detail::fmt_double(r.acc_no_fusion) + "," + detail::fmt_double(r.acc_fused) + "\n";
    return s;
}

inline std::vector<AccuracyRow> read_accuracy_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "snr_db,acc_no_fusion,acc_fused")
        throw DataError(path.string() + ": unexpected header");
    std::vector<AccuracyRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        AccuracyRow r;
        std::istringstream ss(line);
        std::string a, b, c;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected three fields");
        try {
            r.snr_db = std::stod(a);
            r.acc_no_fusion = std::stod(b);
            r.acc_fused = std::stod(c);
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
        }
        rows.push_back(r);
    }
    return rows;
}

inline std::string confusion_csv(const Metrics& m)
{
    std::string s = "snr_db,decision,true_class,predicted_class,count\n";
    const int k = static_cast<int>(m.class_names.size());
    for (const auto& r : m.per_snr)
        for (const auto* kind : {"per_antenna", "fused"}) {
            const auto& cm = std::string(kind) == "fused" ? r.fused : r.per_antenna;
            for (int t = 0; t < k; ++t) {
                for (int p = 0; p < k; ++p)
                    s += detail::fmt_double(r.snr_db) + "," + kind + "," + m.class_names[static_cast<std::size_t>(t)] + "," +
                         m.class_names[static_cast<std::size_t>(p)] + "," + std::to_string(cm.at(t, p)) + "\n";
                s += detail::fmt_double(r.snr_db) + "," + kind + "," + m.class_names[static_cast<std::size_t>(t)] + ",undecided," +
                     std::to_string(cm.undecided(t)) + "\n";
            }
        }
    return s;
}

// Row-normalized heatmap, `cell` pixels per matrix entry, jet colored.
inline Image confusion_heatmap(const ConfusionMatrix& cm, std::size_t cell = 24)
{
    const auto k = static_cast<std::size_t>(cm.size());
    auto img = detail::blank_rgb(k * cell, k * cell, 0.0f);
    for (std::size_t t = 0; t < k; ++t) {
        const auto row = cm.row_total(static_cast<int>(t));
        for (std::size_t p = 0; p < k; ++p) {
            const double v = row == 0 ? 0.0 : static_cast<double>(cm.at(static_cast<int>(t), static_cast<int>(p))) / static_cast<double>(row);
            const auto c = jet_color(v);
            const std::array<float, 3> rgb{static_cast<float>(c[0]), static_cast<float>(c[1]), static_cast<float>(c[2])};
            for (std::size_t y = 0; y < cell; ++y)
                for (std::size_t x = 0; x < cell; ++x)
                    detail::set_px(img, static_cast<long>(t * cell + y), static_cast<long>(p * cell + x), rgb);
        }
    }
    return img;
}

// Accuracy vs SNR: blue = per-antenna, red = fused, grey gridlines every 10%.
inline Image accuracy_plot(const Metrics& m, std::size_t width = 480, std::size_t height = 320)
{
    auto img = detail::blank_rgb(height, width, 1.0f);
    const long left = 40, right = static_cast<long>(width) - 20, top = 20, bottom = static_cast<long>(height) - 40;
    const std::array<float, 3> grey{0.85f, 0.85f, 0.85f}, black{0, 0, 0}, blue{0.1f, 0.2f, 0.9f}, red{0.9f, 0.1f, 0.1f};
    for (int i = 0; i <= 10; ++i) {
        const long y = bottom - (bottom - top) * i / 10;
        detail::draw_line(img, left, y, right, y, grey);
    }
    detail::draw_line(img, left, top, left, bottom, black);
    detail::draw_line(img, left, bottom, right, bottom, black);
    if (m.per_snr.empty())
        return img;
    const double lo = m.per_snr.front().snr_db, hi = m.per_snr.back().snr_db;
    auto px = [&](double snr) {
        return hi > lo ? left + static_cast<long>(std::lround((snr - lo) / (hi - lo) * static_cast<double>(right - left))) : (left + right) / 2;
    };
    auto py = [&](double acc) { return bottom - static_cast<long>(std::lround(std::clamp(acc, 0.0, 1.0) * static_cast<double>(bottom - top))); };
    auto series = [&](auto get, const std::array<float, 3>& color) {
        for (std::size_t i = 0; i < m.per_snr.size(); ++i) {
            const long x = px(m.per_snr[i].snr_db), y = py(get(m.per_snr[i]));
            for (long d = -2; d <= 2; ++d) {
                detail::draw_line(img, x - 2, y + d, x + 2, y + d, color);
            }
            if (i + 1 < m.per_snr.size())
                detail::draw_line(img, x, y, px(m.per_snr[i + 1].snr_db), py(get(m.per_snr[i + 1])), color);
        }
    };
    series([](const SnrResult& r) { return r.acc_no_fusion(); }, blue);
    series([](const SnrResult& r) { return r.acc_fused(); }, red);
    return img;
}

// Writes all report files into `dir` and returns their paths. Nothing is
// written when `m` holds no results.
inline std::vector<std::filesystem::path> write_report(const Metrics& m, const std::filesystem::path& dir)
{
    if (m.per_snr.empty())
        throw DataError("write_report: metrics contain no results");
    std::filesystem::create_directories(dir);
    const auto prefix = report_prefix(m);
    std::vector<std::filesystem::path> written;
    auto put_text = [&](const std::string& name, const std::string& text) {
        const auto path = dir / name;
        io::write_file(path, std::vector<unsigned char>(text.begin(), text.end()));
        written.push_back(path);
    };
    put_text(prefix + "_accuracy.csv", accuracy_csv(m));
    put_text(prefix + "_confusion.csv", confusion_csv(m));
    for (const auto& r : m.per_snr) {
        const auto path = dir / (prefix + "_confusion_" + detail::snr_tag(r.snr_db) + ".png");
        write_png(path, confusion_heatmap(r.fused));
        written.push_back(path);
    }
    const auto plot = dir / (prefix + "_accuracy.png");
    write_png(plot, accuracy_plot(m));
    written.push_back(plot);
    return written;
}

} // namespace modclass::harness
