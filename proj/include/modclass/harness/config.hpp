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

// ExperimentConfig and its JSON form. Every section is optional and falls back
// to the defaults below; unknown keys are rejected.
//
//   {
//     "modulation_set": "theta1" | "theta2" | ["2ask", "2fsk", ...],
//     "snr_list_db": [-4, -2, 0, 2, 4, 6, 8, 10],
//     "signals_per_class_per_snr": 100,
//     "scenario": "siso" | {"kind": "mimo", "nt": 2, "nr": 4},
//     "signal": {"sample_rate_hz", "carrier_hz", "symbol_rate_hz", "num_symbols",
//                "initial_phase_rad", "random_initial_phase", "pulse_shape",
//                "rolloff", "fsk_tone_spacing_hz", "qam_unit_power"},
//     "stft": {"window_len", "overlap_len", "fft_points", "window"},
//     "fit": {"target", "mode", "grayscale"},
//     "train": {"epochs", "batch_size", "learning_rate", "momentum",
//               "dropout_rate", "seed", "validation_fraction"},
//     "fusion": {"rule": "majority" | "n-out-of" | "soft", "n": 3},
//     "master_seed": 1
//   }

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "../cnn.hpp"
#include "../error.hpp"
#include "../fusion.hpp"
#include "../sigsynth.hpp"
#include "../tfa.hpp"

namespace modclass::harness {

using json = nlohmann::json;

struct Scenario {
    bool mimo = false;
    int nt = 1;
    int nr = 1;

    static Scenario siso() { return {}; }
    static Scenario mimo_of(int nt, int nr) { return {true, nt, nr}; }

    int receive_antennas() const { return mimo ? nr : 1; }
    std::string tag() const { return mimo ? "mimo" + std::to_string(nt) + "x" + std::to_string(nr) : "siso"; }
};

struct ExperimentConfig {
    std::vector<ModulationScheme> modulation_set = theta1();
    std::vector<double> snr_list_db = {-4, -2, 0, 2, 4, 6, 8, 10};
    int signals_per_class_per_snr = 100;
    Scenario scenario;
    SignalParams signal;
    StftConfig stft;
    FitOptions fit;
    cnn::TrainConfig train;
    FusionRule fusion = FusionRule::majority();
    std::uint64_t master_seed = 1;

    int num_classes() const { return static_cast<int>(modulation_set.size()); }

    std::vector<std::string> class_names() const
    {
        std::vector<std::string> names;
        for (const auto& s : modulation_set)
            names.push_back(s.name());
        return names;
    }

    // "theta1", "theta2" or "custom".
    std::string set_tag() const
    {
        if (modulation_set == theta1())
            return "theta1";
        if (modulation_set == theta2())
            return "theta2";
        return "custom";
    }

    cnn::Shape input_shape() const
    {
        const int ch = fit.grayscale ? 1 : 3;
        if (fit.target > 0)
            return {ch, fit.target, fit.target};
        const std::size_t len = signal.length();
        return {ch, stft.num_bins(), static_cast<int>(frame_count(len, stft))};
    }
};

inline void validate(const ExperimentConfig& c)
{
    if (c.modulation_set.size() < 2)
        throw ConfigError("modulation_set needs at least two schemes");
    std::set<std::string> seen;
    for (const auto& s : c.modulation_set) {
        if (!is_supported(s))
            throw ConfigError("unsupported modulation scheme " + s.label());
        if (!seen.insert(s.name()).second)
            throw ConfigError("duplicate modulation scheme " + s.label());
        validate(s, c.signal);
    }
    if (c.snr_list_db.empty())
        throw ConfigError("snr_list_db must not be empty");
    if (c.signals_per_class_per_snr < 1)
        throw ConfigError("signals_per_class_per_snr must be >= 1");
    if (c.scenario.mimo && (c.scenario.nt < 1 || c.scenario.nr < c.scenario.nt))
        throw ConfigError("MIMO scenario needs nr >= nt >= 1");
    validate(c.stft);
    if (c.signal.length() < static_cast<std::size_t>(c.stft.window_len))
        throw ConfigError("signal length " + std::to_string(c.signal.length()) + " is shorter than the STFT window");
    if (c.fit.target != 0 && c.fit.target < 8)
        throw ConfigError("fit.target must be 0 (no fitting) or >= 8");
    cnn::validate(c.train);
    if (c.fusion.kind == FusionRule::Kind::NOutOf && (c.fusion.n < 1 || c.fusion.n > c.scenario.receive_antennas()))
        throw ConfigError("fusion n must lie in [1, N_r]");
}

namespace detail {

inline void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where)
{
    if (!obj.is_object())
        throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key))
            throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
void read_opt(const json& obj, const char* key, T& out, const std::string& where)
{
    if (!obj.contains(key))
        return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

inline std::string window_name(WindowKind k)
{
    switch (k) {
    case WindowKind::Hamming: return "hamming";
    case WindowKind::Hanning: return "hanning";
    case WindowKind::Blackman: return "blackman";
    }
    return "hamming";
}

inline WindowKind parse_window(const std::string& s)
{
    if (s == "hamming")
        return WindowKind::Hamming;
    if (s == "hanning" || s == "hann")
        return WindowKind::Hanning;
    if (s == "blackman")
        return WindowKind::Blackman;
    throw ConfigError("unknown window '" + s + "'");
}

} // namespace detail

inline ExperimentConfig config_from_json(const json& j)
{
    using detail::check_keys;
    using detail::read_opt;
    ExperimentConfig c;
    check_keys(j, {"modulation_set", "snr_list_db", "signals_per_class_per_snr", "scenario", "signal", "stft", "fit", "train", "fusion",
                   "master_seed"},
               "config");

    if (j.contains("modulation_set")) {
        const auto& m = j.at("modulation_set");
        if (m.is_string()) {
            const auto name = m.get<std::string>();
            if (name == "theta1")
                c.modulation_set = theta1();
            else if (name == "theta2")
                c.modulation_set = theta2();
            else
                throw ConfigError("modulation_set must be \"theta1\", \"theta2\" or a list of scheme names");
        } else if (m.is_array()) {
            c.modulation_set.clear();
            for (const auto& e : m) {
                if (!e.is_string())
                    throw ConfigError("modulation_set entries must be strings");
                c.modulation_set.push_back(parse_scheme(e.get<std::string>()));
            }
        } else {
            throw ConfigError("modulation_set must be a string or an array");
        }
    }
    read_opt(j, "snr_list_db", c.snr_list_db, "config");
    read_opt(j, "signals_per_class_per_snr", c.signals_per_class_per_snr, "config");
    read_opt(j, "master_seed", c.master_seed, "config");

    if (j.contains("scenario")) {
        const auto& s = j.at("scenario");
        if (s.is_string()) {
            if (s.get<std::string>() != "siso")
                throw ConfigError("scenario string must be \"siso\"; use an object for MIMO");
            c.scenario = Scenario::siso();
        } else {
            check_keys(s, {"kind", "nt", "nr"}, "scenario");
            std::string kind = "siso";
            read_opt(s, "kind", kind, "scenario");
            if (kind == "siso") {
                c.scenario = Scenario::siso();
            } else if (kind == "mimo") {
                c.scenario = Scenario::mimo_of(2, 4);
                read_opt(s, "nt", c.scenario.nt, "scenario");
                read_opt(s, "nr", c.scenario.nr, "scenario");
            } else {
                throw ConfigError("scenario.kind must be \"siso\" or \"mimo\"");
            }
        }
    }

    if (j.contains("signal")) {
        const auto& s = j.at("signal");
        check_keys(s, {"sample_rate_hz", "carrier_hz", "symbol_rate_hz", "num_symbols", "initial_phase_rad", "random_initial_phase",
                       "pulse_shape", "rolloff", "fsk_tone_spacing_hz", "qam_unit_power"},
                   "signal");
        auto& p = c.signal;
        read_opt(s, "sample_rate_hz", p.sample_rate_hz, "signal");
        read_opt(s, "carrier_hz", p.carrier_hz, "signal");
        read_opt(s, "symbol_rate_hz", p.symbol_rate_hz, "signal");
        read_opt(s, "num_symbols", p.num_symbols, "signal");
        read_opt(s, "initial_phase_rad", p.initial_phase_rad, "signal");
        read_opt(s, "random_initial_phase", p.random_initial_phase, "signal");
        read_opt(s, "rolloff", p.rolloff, "signal");
        read_opt(s, "fsk_tone_spacing_hz", p.fsk_tone_spacing_hz, "signal");
        read_opt(s, "qam_unit_power", p.qam_unit_power, "signal");
        if (s.contains("pulse_shape")) {
            std::string ps;
            read_opt(s, "pulse_shape", ps, "signal");
            if (ps == "rectangular")
                p.pulse_shape = PulseShape::Rectangular;
            else if (ps == "rrc")
                p.pulse_shape = PulseShape::RootRaisedCosine;
            else
                throw ConfigError("signal.pulse_shape must be \"rectangular\" or \"rrc\"");
        }
    }

    if (j.contains("stft")) {
        const auto& s = j.at("stft");
        check_keys(s, {"window_len", "overlap_len", "fft_points", "window"}, "stft");
        read_opt(s, "window_len", c.stft.window_len, "stft");
        read_opt(s, "overlap_len", c.stft.overlap_len, "stft");
        read_opt(s, "fft_points", c.stft.fft_points, "stft");
        if (s.contains("window")) {
            std::string w;
            read_opt(s, "window", w, "stft");
            c.stft.window = detail::parse_window(w);
        }
    }

    if (j.contains("fit")) {
        const auto& s = j.at("fit");
        check_keys(s, {"target", "mode", "grayscale"}, "fit");
        read_opt(s, "target", c.fit.target, "fit");
        read_opt(s, "grayscale", c.fit.grayscale, "fit");
        if (s.contains("mode")) {
            std::string m;
            read_opt(s, "mode", m, "fit");
            if (m == "resize")
                c.fit.mode = FitMode::Resize;
            else if (m == "crop-pad")
                c.fit.mode = FitMode::CropPad;
            else
                throw ConfigError("fit.mode must be \"resize\" or \"crop-pad\"");
        }
    }

    if (j.contains("train")) {
        const auto& s = j.at("train");
        check_keys(s, {"epochs", "batch_size", "learning_rate", "momentum", "dropout_rate", "seed", "validation_fraction"}, "train");
        auto& t = c.train;
        read_opt(s, "epochs", t.epochs, "train");
        read_opt(s, "batch_size", t.batch_size, "train");
        read_opt(s, "learning_rate", t.learning_rate, "train");
        read_opt(s, "momentum", t.momentum, "train");
        read_opt(s, "dropout_rate", t.dropout_rate, "train");
        read_opt(s, "seed", t.seed, "train");
        read_opt(s, "validation_fraction", t.validation_fraction, "train");
    }

    if (j.contains("fusion")) {
        const auto& s = j.at("fusion");
        check_keys(s, {"rule", "n"}, "fusion");
        std::string rule = "majority";
        read_opt(s, "rule", rule, "fusion");
        if (rule == "majority") {
            c.fusion = FusionRule::majority();
        } else if (rule == "n-out-of") {
            int n = 0;
            read_opt(s, "n", n, "fusion");
            c.fusion = FusionRule::n_out_of(n);
        } else if (rule == "soft") {
            c.fusion = FusionRule::soft();
        } else {
            throw ConfigError("fusion.rule must be \"majority\", \"n-out-of\" or \"soft\"");
        }
    }

    validate(c);
    return c;
}

inline json config_to_json(const ExperimentConfig& c)
{
    json j;
    const auto tag = c.set_tag();
    if (tag == "custom")
        j["modulation_set"] = c.class_names();
    else
        j["modulation_set"] = tag;
    j["snr_list_db"] = c.snr_list_db;
    j["signals_per_class_per_snr"] = c.signals_per_class_per_snr;
    if (c.scenario.mimo)
        j["scenario"] = {{"kind", "mimo"}, {"nt", c.scenario.nt}, {"nr", c.scenario.nr}};
    else
        j["scenario"] = "siso";
    const auto& p = c.signal;
    j["signal"] = {{"sample_rate_hz", p.sample_rate_hz},
                   {"carrier_hz", p.carrier_hz},
                   {"symbol_rate_hz", p.symbol_rate_hz},
                   {"num_symbols", p.num_symbols},
                   {"initial_phase_rad", p.initial_phase_rad},
                   {"random_initial_phase", p.random_initial_phase},
                   {"pulse_shape", p.pulse_shape == PulseShape::Rectangular ? "rectangular" : "rrc"},
                   {"rolloff", p.rolloff},
                   {"fsk_tone_spacing_hz", p.fsk_tone_spacing_hz},
                   {"qam_unit_power", p.qam_unit_power}};
    j["stft"] = {{"window_len", c.stft.window_len},
                 {"overlap_len", c.stft.overlap_len},
                 {"fft_points", c.stft.fft_points},
                 {"window", detail::window_name(c.stft.window)}};
    j["fit"] = {{"target", c.fit.target}, {"mode", c.fit.mode == FitMode::Resize ? "resize" : "crop-pad"}, {"grayscale", c.fit.grayscale}};
    const auto& t = c.train;
    j["train"] = {{"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"learning_rate", t.learning_rate},
                  {"momentum", t.momentum},
                  {"dropout_rate", t.dropout_rate},
                  {"seed", t.seed},
                  {"validation_fraction", t.validation_fraction}};
    switch (c.fusion.kind) {
    case FusionRule::Kind::Majority: j["fusion"] = {{"rule", "majority"}}; break;
    case FusionRule::Kind::NOutOf: j["fusion"] = {{"rule", "n-out-of"}, {"n", c.fusion.n}}; break;
    case FusionRule::Kind::Soft: j["fusion"] = {{"rule", "soft"}}; break;
    }
    j["master_seed"] = c.master_seed;
    return j;
}

inline ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

} // namespace modclass::harness
