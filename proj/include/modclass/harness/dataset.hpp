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

// Labelled dataset generation. Every bundle is derived from
// (master_seed, split, class, snr, index) alone, so any item can be
// regenerated independently and train/test never share a seed.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "../channel.hpp"
#include "../cnn.hpp"
#include "../error.hpp"
#include "../image_io.hpp"
#include "../parallel.hpp"
#include "../rng.hpp"
#include "../sigsynth.hpp"
#include "../tfa.hpp"
#include "config.hpp"

namespace modclass::harness {

enum class Split { Train, Test };

inline std::string split_name(Split s) { return s == Split::Train ? "train" : "test"; }

inline Split parse_split(const std::string& s)
{
    if (s == "train")
        return Split::Train;
    if (s == "test")
        return Split::Test;
    throw ConfigError("split must be \"train\" or \"test\", got '" + s + "'");
}

// Test counters start here; train counters stay below it.
inline constexpr std::uint64_t kTestCounterOffset = std::uint64_t{1} << 40;

struct BundleKey {
    int class_index = 0;
    int snr_index = 0;
    int index = 0;
};

inline std::size_t bundles_per_split(const ExperimentConfig& c)
{
    return c.modulation_set.size() * c.snr_list_db.size() * static_cast<std::size_t>(c.signals_per_class_per_snr);
}

// Bundles are ordered class-major, then SNR, then index.
inline BundleKey bundle_key(const ExperimentConfig& c, std::size_t bundle)
{
    const auto per = static_cast<std::size_t>(c.signals_per_class_per_snr);
    const auto nsnr = c.snr_list_db.size();
    BundleKey k;
    k.index = static_cast<int>(bundle % per);
    k.snr_index = static_cast<int>((bundle / per) % nsnr);
    k.class_index = static_cast<int>(bundle / (per * nsnr));
    return k;
}

inline std::uint64_t bundle_seed(const ExperimentConfig& c, Split split, std::size_t bundle)
{
    const std::uint64_t base = split == Split::Test ? kTestCounterOffset : 0;
    return derive_seed(c.master_seed, base + bundle);
}

struct GeneratedBundle {
    std::size_t bundle = 0;
    int label = 0;
    double snr_db = 0.0;
    std::uint64_t seed = 0;
    ReceivedBundle received;
    std::vector<Image> images; // one per receive antenna
};

namespace detail {

// Redraws symbols until the stream has non-zero power (all-zero OOK words
// cannot be calibrated against).
inline RealSignal draw_stream(const ModulationScheme& scheme, SignalParams params, Rng& rng)
{
    if (params.random_initial_phase) {
        std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
        params.initial_phase_rad = phase(rng);
    }
    for (int attempt = 0; attempt < 1000; ++attempt) {
        auto symbols = generate_symbols(scheme.order, params.num_symbols, rng);
        auto x = modulate(scheme, symbols, params);
        if (x.power() > 0.0)
            return x;
    }
    throw NumericError("could not draw a non-silent " + scheme.label() + " stream");
}

} // namespace detail

// Synthesizes one bundle: nt streams of the labelled class, the channel, noise,
// and the per-antenna spectrogram images.
inline GeneratedBundle generate_bundle(const ExperimentConfig& c, Split split, std::size_t bundle, bool keep_signals = false)
{
    if (bundle >= bundles_per_split(c))
        throw ConfigError("bundle index " + std::to_string(bundle) + " out of range");
    const auto key = bundle_key(c, bundle);
    GeneratedBundle g;
    g.bundle = bundle;
    g.label = key.class_index;
    g.snr_db = c.snr_list_db[static_cast<std::size_t>(key.snr_index)];
    g.seed = bundle_seed(c, split, bundle);
    Rng rng = make_rng(g.seed);

    const auto& scheme = c.modulation_set[static_cast<std::size_t>(key.class_index)];
    const int nt = c.scenario.mimo ? c.scenario.nt : 1;
    std::vector<RealSignal> streams;
    for (int j = 0; j < nt; ++j)
        streams.push_back(detail::draw_stream(scheme, c.signal, rng));
    const auto channel = c.scenario.mimo ? sample_channel(c.scenario.nt, c.scenario.nr, c.signal.symbol_period_s(), rng) : ChannelMatrix::identity(1);
    g.received = mimo_transmit(streams, channel, g.snr_db, rng);
    g.received.truth_label = scheme;
    for (const auto& y : g.received.branches)
        g.images.push_back(spectrogram(y, c.stft, c.fit));
    if (!keep_signals)
        g.received.branches.clear();
    return g;
}

// Training samples for a split held in memory. Every receive antenna becomes
// its own sample.
inline std::vector<cnn::Sample> generate_samples(const ExperimentConfig& c, Split split, unsigned threads = thread_count())
{
    const std::size_t n = bundles_per_split(c);
    const auto ant = static_cast<std::size_t>(c.scenario.receive_antennas());
    std::vector<cnn::Sample> out(n * ant);
    parallel_for(
        n,
        [&](std::size_t b) {
            auto g = generate_bundle(c, split, b);
            for (std::size_t a = 0; a < ant; ++a)
                out[b * ant + a] = {std::move(g.images[a]), g.label};
        },
        threads);
    return out;
}

struct ManifestRecord {
    std::string image_path; // relative to the manifest directory
    int label = 0;
    double snr_db = 0.0;
    std::string scenario;
    int antenna_index = 0;
    std::size_t bundle = 0;
    std::uint64_t seed = 0;
};

struct DatasetManifest {
    std::filesystem::path directory;
    std::string split;
    std::string scenario;
    std::vector<std::string> class_names;
    std::vector<ManifestRecord> records;
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m)
{
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : m.records)
        recs.push_back({{"image_path", r.image_path},
                        {"label", r.label},
                        {"snr_db", r.snr_db},
                        {"scenario", r.scenario},
                        {"antenna_index", r.antenna_index},
                        {"bundle", r.bundle},
                        {"seed", r.seed}});
    return {{"split", m.split}, {"scenario", m.scenario}, {"class_names", m.class_names}, {"records", std::move(recs)}};
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write manifest " + path.string());
    out << manifest_to_json(m).dump(1) << '\n';
    if (!out)
        throw DataError("failed writing manifest " + path.string());
}

inline DatasetManifest read_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open manifest " + path.string());
    DatasetManifest m;
    m.directory = path.parent_path();
    try {
        nlohmann::json j;
        in >> j;
        m.split = j.at("split").get<std::string>();
        m.scenario = j.at("scenario").get<std::string>();
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
        for (const auto& e : j.at("records")) {
            ManifestRecord r;
            r.image_path = e.at("image_path").get<std::string>();
            r.label = e.at("label").get<int>();
            r.snr_db = e.at("snr_db").get<double>();
            r.scenario = e.at("scenario").get<std::string>();
            r.antenna_index = e.at("antenna_index").get<int>();
            r.bundle = e.at("bundle").get<std::size_t>();
            r.seed = e.at("seed").get<std::uint64_t>();
            if (r.label < 0 || r.label >= static_cast<int>(m.class_names.size()))
                throw DataError("label " + std::to_string(r.label) + " out of range for " + r.image_path);
            m.records.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed manifest " + path.string() + ": " + e.what());
    }
    return m;
}

inline std::string image_file_name(std::size_t bundle, int antenna)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "images/b%07zu_a%d.tfa", bundle, antenna);
    return buf;
}

// Writes every image of a split under `dir` plus dir/manifest.json. Output is
// byte-identical for identical configs.
inline DatasetManifest generate_dataset(const ExperimentConfig& c, Split split, const std::filesystem::path& dir, unsigned threads = thread_count())
{
    std::filesystem::create_directories(dir / "images");
    const std::size_t n = bundles_per_split(c);
    const int ant = c.scenario.receive_antennas();
    DatasetManifest m;
    m.directory = dir;
    m.split = split_name(split);
    m.scenario = c.scenario.tag();
    m.class_names = c.class_names();
    m.records.resize(n * static_cast<std::size_t>(ant));
    parallel_for(
        n,
        [&](std::size_t b) {
            auto g = generate_bundle(c, split, b);
            for (int a = 0; a < ant; ++a) {
                ManifestRecord r;
                r.image_path = image_file_name(b, a);
                r.label = g.label;
                r.snr_db = g.snr_db;
                r.scenario = m.scenario;
                r.antenna_index = a;
                r.bundle = b;
                r.seed = g.seed;
                write_raw_image(dir / r.image_path, g.images[static_cast<std::size_t>(a)]);
                m.records[b * static_cast<std::size_t>(ant) + static_cast<std::size_t>(a)] = std::move(r);
            }
        },
        threads);
    write_manifest(m, dir / "manifest.json");
    return m;
}

inline Image load_record_image(const DatasetManifest& m, const ManifestRecord& r)
{
    const auto path = m.directory / r.image_path;
    if (!std::filesystem::exists(path))
        throw DataError("missing image " + path.string());
    return read_raw_image(path);
}

inline std::vector<cnn::Sample> load_samples(const DatasetManifest& m, unsigned threads = thread_count())
{
    std::vector<cnn::Sample> out(m.records.size());
    parallel_for(
        m.records.size(), [&](std::size_t i) { out[i] = {load_record_image(m, m.records[i]), m.records[i].label}; }, threads);
    return out;
}

} // namespace modclass::harness
