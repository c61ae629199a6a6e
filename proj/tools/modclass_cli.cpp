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

// modclass command-line front end.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data/I-O error,
// 3 numeric failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "modclass.hpp"

namespace fs = std::filesystem;
using namespace modclass;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

harness::ExperimentConfig config_or_default(const std::string& path)
{
    return path.empty() ? harness::ExperimentConfig{} : harness::load_config(path);
}

fs::path sidecar_path(const fs::path& signal) { return fs::path(signal.string() + ".json"); }

int cmd_synth(const std::string& scheme_name, double snr_db, std::uint64_t seed, const std::string& out, const std::string& config)
{
    const auto cfg = config_or_default(config);
    const auto scheme = parse_scheme(scheme_name);
    validate(scheme, cfg.signal);
    Rng rng = make_rng(seed);
    auto params = cfg.signal;
    if (params.random_initial_phase)
        params.initial_phase_rad = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    auto x = modulate(scheme, generate_symbols(scheme.order, params.num_symbols, rng), params);
    if (std::isfinite(snr_db))
        x = add_awgn(x, snr_db, rng);
    write_signal_f32(out, x);
    json meta = {{"sample_rate_hz", x.sample_rate_hz}, {"scheme", scheme.name()}, {"seed", seed}, {"samples", x.size()}};
    if (std::isfinite(snr_db))
        meta["snr_db"] = snr_db;
    std::ofstream(sidecar_path(out)) << meta.dump(1) << '\n';
    std::cout << "wrote " << x.size() << " samples of " << scheme.label() << " to " << out << '\n';
    return kOk;
}

int cmd_spectrogram(const std::string& in, const std::string& png, const std::string& raw, double fs_override, const std::string& config)
{
    const auto cfg = config_or_default(config);
    double fs_hz = cfg.signal.sample_rate_hz;
    if (fs_override > 0) {
        fs_hz = fs_override;
    } else if (fs::exists(sidecar_path(in))) {
        try {
            fs_hz = json::parse(std::ifstream(sidecar_path(in))).at("sample_rate_hz").get<double>();
        } catch (const json::exception& e) {
            throw DataError("malformed sidecar " + sidecar_path(in).string() + ": " + e.what());
        }
    }
    const auto y = read_signal_f32(in, fs_hz);
    const auto img = spectrogram(y, cfg.stft, cfg.fit);
    if (!png.empty())
        write_png(png, img);
    if (!raw.empty())
        write_raw_image(raw, img);
    std::cout << "spectrogram " << img.height << "x" << img.width << "x" << img.channels << '\n';
    return kOk;
}

int cmd_dataset(const std::string& config, const std::string& split, const std::string& out_dir)
{
    const auto cfg = harness::load_config(config);
    const auto m = harness::generate_dataset(cfg, harness::parse_split(split), out_dir);
    std::cout << "wrote " << m.records.size() << " images to " << out_dir << '\n';
    return kOk;
}

int cmd_train(const std::string& config, const std::string& data, const std::string& model, std::string history)
{
    const auto cfg = harness::load_config(config);
    const auto m = harness::read_manifest(fs::path(data) / "manifest.json");
    if (history.empty())
        history = model + ".history.csv";
    harness::run_training(cfg, m, model, history, [](const cnn::EpochRecord& r) {
        std::fprintf(stderr, "epoch %d  loss %.5f  val_acc %.4f\n", r.epoch, r.train_loss, r.val_acc);
    });
    std::cout << "model written to " << model << '\n';
    return kOk;
}

void print_metrics(const harness::Metrics& m)
{
    // acc_no_fusion averages every antenna; antenna_0 is the first antenna alone.
    std::printf("%8s %14s %10s %10s\n", "snr_db", "acc_no_fusion", "antenna_0", "acc_fused");
    for (const auto& r : m.per_snr)
        std::printf("%8g %14.4f %10.4f %10.4f\n", r.snr_db, r.acc_no_fusion(), r.acc_first_antenna(), r.acc_fused());
    const auto o = m.overall();
    std::printf("%8s %14.4f %10.4f %10.4f\n", "overall", o.acc_no_fusion(), o.acc_first_antenna(), o.acc_fused());
}

int cmd_eval(const std::string& config, const std::string& data, const std::string& model_path, const std::string& report)
{
    const auto cfg = harness::load_config(config);
    const auto m = harness::read_manifest(fs::path(data) / "manifest.json");
    const auto model = cnn::load_model(model_path);
    const auto metrics = harness::evaluate_model(cfg, model, m);
    print_metrics(metrics);
    if (!report.empty())
        for (const auto& p : harness::write_report(metrics, report))
            std::cout << "wrote " << p.string() << '\n';
    return kOk;
}

int cmd_fuse_demo(const std::string& labels_text, const std::string& rule_name, int n, std::uint64_t seed, int trials)
{
    std::vector<ModulationScheme> schemes;
    std::vector<int> labels;
    std::stringstream ss(labels_text);
    for (std::string tok; std::getline(ss, tok, ',');) {
        const auto s = parse_scheme(tok);
        auto it = std::find(schemes.begin(), schemes.end(), s);
        if (it == schemes.end()) {
            schemes.push_back(s);
            it = schemes.end() - 1;
        }
        labels.push_back(static_cast<int>(it - schemes.begin()));
    }
    FusionRule rule;
    if (rule_name == "majority")
        rule = FusionRule::majority();
    else if (rule_name == "n-out-of")
        rule = FusionRule::n_out_of(n);
    else
        throw ConfigError("--rule must be majority or n-out-of");

    std::map<std::string, int> tally;
    for (int t = 0; t < trials; ++t) {
        Rng rng = make_rng(seed + static_cast<std::uint64_t>(t));
        const auto out = fuse(labels, rule, rng);
        ++tally[out.undecided ? "undecided" : schemes[static_cast<std::size_t>(out.final_label)].label()];
        if (trials == 1)
            std::cout << (out.undecided ? "undecided" : schemes[static_cast<std::size_t>(out.final_label)].label())
                      << (out.tie_broken ? " (tie broken at random)" : "") << '\n';
    }
    if (trials > 1)
        for (const auto& [name, count] : tally)
            std::printf("%-10s %d/%d (%.4f)\n", name.c_str(), count, trials, static_cast<double>(count) / trials);
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Time-frequency modulation classification toolkit"};
    app.require_subcommand(1);

    std::string config;
    auto* synth = app.add_subcommand("synth", "Synthesize one modulated waveform");
    std::string scheme, out;
    double snr = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 1;
    synth->add_option("--scheme", scheme, "Scheme name, e.g. 2fsk")->required();
    synth->add_option("--snr", snr, "SNR in dB (omit for a clean signal)");
    synth->add_option("--seed", seed, "RNG seed");
    synth->add_option("--out", out, "Output .f32 path")->required();
    synth->add_option("--config", config, "Experiment config for signal parameters");

    auto* spec = app.add_subcommand("spectrogram", "Render a spectrogram image from a waveform");
    std::string in, png, raw;
    double fs_hz = 0.0;
    spec->add_option("--in", in, "Input .f32 waveform")->required();
    spec->add_option("--out", png, "PNG output");
    spec->add_option("--raw", raw, "Raw float image output (.tfa)");
    spec->add_option("--fs", fs_hz, "Sample rate override in Hz");
    spec->add_option("--config", config, "Experiment config for STFT and fit settings");

    auto* dataset = app.add_subcommand("dataset", "Generate a labelled image dataset");
    std::string split = "train", out_dir;
    dataset->add_option("--config", config, "Experiment config")->required();
    dataset->add_option("--split", split, "train or test");
    dataset->add_option("--out-dir", out_dir, "Output directory")->required();

    auto* train = app.add_subcommand("train", "Train a classifier on a dataset");
    std::string data, model, history;
    train->add_option("--config", config, "Experiment config")->required();
    train->add_option("--data", data, "Dataset directory")->required();
    train->add_option("--model", model, "Model output path")->required();
    train->add_option("--history", history, "Training history CSV path");

    auto* eval = app.add_subcommand("eval", "Evaluate a model on a dataset");
    std::string report;
    eval->add_option("--config", config, "Experiment config")->required();
    eval->add_option("--data", data, "Dataset directory")->required();
    eval->add_option("--model", model, "Model file")->required();
    eval->add_option("--report", report, "Report output directory");

    auto* fuse_demo = app.add_subcommand("fuse-demo", "Fuse a list of per-antenna labels");
    std::string labels, rule = "majority";
    int n = 1, trials = 1;
    fuse_demo->add_option("--labels", labels, "Comma-separated scheme names")->required();
    fuse_demo->add_option("--rule", rule, "majority or n-out-of");
    fuse_demo->add_option("--n", n, "Votes needed for n-out-of");
    fuse_demo->add_option("--seed", seed, "Tie-break seed");
    fuse_demo->add_option("--trials", trials, "Repeat with consecutive seeds and print the outcome distribution")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*synth)
            return cmd_synth(scheme, snr, seed, out, config);
        if (*spec)
            return cmd_spectrogram(in, png, raw, fs_hz, config);
        if (*dataset)
            return cmd_dataset(config, split, out_dir);
        if (*train)
            return cmd_train(config, data, model, history);
        if (*eval)
            return cmd_eval(config, data, model, report);
        if (*fuse_demo)
            return cmd_fuse_demo(labels, rule, n, seed, trials);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
