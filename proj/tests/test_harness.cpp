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

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "modclass/harness/config.hpp"
#include "modclass/harness/dataset.hpp"
#include "modclass/harness/evaluate.hpp"
#include "modclass/harness/report.hpp"

using namespace modclass;
using namespace modclass::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("modclass_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ExperimentConfig tiny_config()
{
    ExperimentConfig c;
    c.modulation_set = {parse_scheme("2fsk"), parse_scheme("2psk")};
    c.snr_list_db = {10};
    c.signals_per_class_per_snr = 3;
    c.fit.target = 32;
    c.train.epochs = 2;
    c.train.batch_size = 4;
    c.train.validation_fraction = 0.0;
    c.master_seed = 77;
    return c;
}

std::vector<unsigned char> slurp(const fs::path& p)
{
    return io::read_file(p);
}

DecisionVector one_hot(int k, int label)
{
    DecisionVector d;
    d.probs.assign(static_cast<std::size_t>(k), 0.0);
    d.probs[static_cast<std::size_t>(label)] = 1.0;
    return d;
}

} // namespace

TEST(Config, DefaultsAreValid)
{
    ExperimentConfig c;
    EXPECT_NO_THROW(validate(c));
    EXPECT_EQ(c.num_classes(), 8);
    EXPECT_EQ(c.set_tag(), "theta1");
    EXPECT_EQ(c.input_shape(), (cnn::Shape{3, 64, 64}));
    EXPECT_EQ(c.scenario.tag(), "siso");
}

TEST(Config, ParsesJson)
{
    const auto c = config_from_json(json::parse(R"({
        "modulation_set": "theta2",
        "snr_list_db": [0, 10],
        "signals_per_class_per_snr": 5,
        "scenario": {"kind": "mimo", "nt": 2, "nr": 4},
        "signal": {"pulse_shape": "rrc", "rolloff": 0.5},
        "stft": {"window": "hanning"},
        "fit": {"target": 48, "mode": "crop-pad", "grayscale": true},
        "train": {"epochs": 3, "learning_rate": 0.02},
        "fusion": {"rule": "n-out-of", "n": 3},
        "master_seed": 12
    })"));
    EXPECT_EQ(c.num_classes(), 6);
    EXPECT_EQ(c.scenario.tag(), "mimo2x4");
    EXPECT_EQ(c.signal.pulse_shape, PulseShape::RootRaisedCosine);
    EXPECT_EQ(c.stft.window, WindowKind::Hanning);
    EXPECT_EQ(c.input_shape(), (cnn::Shape{1, 48, 48}));
    EXPECT_EQ(c.train.epochs, 3);
    EXPECT_EQ(c.fusion.kind, FusionRule::Kind::NOutOf);
    EXPECT_EQ(c.master_seed, 12u);
    const auto again = config_from_json(config_to_json(c));
    EXPECT_EQ(config_to_json(again), config_to_json(c));
}

TEST(Config, RejectsUnknownKeysAndBadValues)
{
    EXPECT_THROW(config_from_json(json::parse(R"({"snr_list": [1]})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"train": {"epoch": 3}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"snr_list_db": []})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"signals_per_class_per_snr": 0})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"modulation_set": ["2psk", "2psk"]})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"fusion": {"rule": "n-out-of", "n": 2}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"train": {"epochs": "many"}})")), ConfigError);
}

TEST(Dataset, ProtocolArithmetic)
{
    ExperimentConfig c;
    EXPECT_EQ(bundles_per_split(c), 6400u);
    c.scenario = Scenario::mimo_of(2, 4);
    EXPECT_EQ(bundles_per_split(c) * static_cast<std::size_t>(c.scenario.receive_antennas()), 25600u);
}

TEST(Dataset, BundleKeysAndSeeds)
{
    ExperimentConfig c;
    const auto k = bundle_key(c, 100 * 8 + 100 * 3 + 7);
    EXPECT_EQ(k.class_index, 1);
    EXPECT_EQ(k.snr_index, 3);
    EXPECT_EQ(k.index, 7);
    std::set<std::uint64_t> train, test;
    for (std::size_t b = 0; b < bundles_per_split(c); ++b) {
        train.insert(bundle_seed(c, Split::Train, b));
        test.insert(bundle_seed(c, Split::Test, b));
    }
    EXPECT_EQ(train.size(), 6400u);
    for (auto s : test)
        EXPECT_FALSE(train.count(s));
}

TEST(Dataset, MimoBundleShape)
{
    auto c = tiny_config();
    c.scenario = Scenario::mimo_of(2, 4);
    const auto g = generate_bundle(c, Split::Train, 4, true);
    EXPECT_EQ(g.images.size(), 4u);
    EXPECT_EQ(g.received.branches.size(), 4u);
    EXPECT_EQ(g.label, 1);
    for (const auto& img : g.images)
        EXPECT_EQ(img.height, 32u);
}

TEST(Dataset, DiskOutputIsReproducible)
{
    const auto c = tiny_config();
    const auto a = scratch("ds_a"), b = scratch("ds_b");
    const auto ma = generate_dataset(c, Split::Train, a);
    generate_dataset(c, Split::Train, b);
    EXPECT_EQ(ma.records.size(), 6u);
    EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
    for (const auto& r : ma.records)
        EXPECT_EQ(slurp(a / r.image_path), slurp(b / r.image_path)) << r.image_path;

    const auto m = read_manifest(a / "manifest.json");
    EXPECT_EQ(m.split, "train");
    EXPECT_EQ(m.class_names, c.class_names());
    for (const auto& r : m.records) {
        const auto img = load_record_image(m, r);
        EXPECT_EQ(img.height, 32u);
        EXPECT_EQ(img.channels, 3u);
        // Each record regenerates from its own key.
        EXPECT_EQ(img, generate_bundle(c, Split::Train, r.bundle).images[0]);
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Dataset, MissingImageNamed)
{
    const auto c = tiny_config();
    const auto dir = scratch("ds_missing");
    const auto m = generate_dataset(c, Split::Train, dir);
    fs::remove(dir / m.records[2].image_path);
    try {
        run_training(c, read_manifest(dir / "manifest.json"), dir / "m.cnn1", dir / "h.csv");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find(m.records[2].image_path), std::string::npos) << e.what();
    }
    fs::remove_all(dir);
}

TEST(Pipeline, TinyTrainEvalEndToEnd)
{
    auto c = tiny_config();
    c.signals_per_class_per_snr = 10;
    const auto t0 = std::chrono::steady_clock::now();
    const auto dir = scratch("pipeline");
    generate_dataset(c, Split::Train, dir / "train");
    generate_dataset(c, Split::Test, dir / "test");
    const auto history = run_training(c, read_manifest(dir / "train" / "manifest.json"), dir / "m.cnn1", dir / "h.csv");
    EXPECT_EQ(history.size(), 2u);
    const auto model = cnn::load_model(dir / "m.cnn1");
    EXPECT_EQ(model.num_classes(), 2);
    const auto metrics = evaluate_model(c, model, read_manifest(dir / "test" / "manifest.json"));
    ASSERT_EQ(metrics.per_snr.size(), 1u);
    EXPECT_EQ(metrics.per_snr[0].fused.total(), 20u);
    EXPECT_THROW(evaluate_model(c, model, read_manifest(dir / "train" / "manifest.json")), ConfigError);
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 120.0);
    fs::remove_all(dir);
}

TEST(Pipeline, HeadWidthFollowsModulationSet)
{
    auto c = tiny_config();
    c.modulation_set = theta2();
    c.signals_per_class_per_snr = 1;
    c.train.epochs = 1;
    const auto dir = scratch("theta2");
    generate_dataset(c, Split::Train, dir);
    run_training(c, read_manifest(dir / "manifest.json"), dir / "m.cnn1", dir / "h.csv");
    EXPECT_EQ(cnn::load_model(dir / "m.cnn1").num_classes(), 6);
    fs::remove_all(dir);
}

TEST(Pipeline, ClassSetMismatchRejected)
{
    auto c = tiny_config();
    const auto dir = scratch("mismatch");
    generate_dataset(c, Split::Test, dir);
    const auto m = read_manifest(dir / "manifest.json");
    auto other = c;
    other.modulation_set = {parse_scheme("2ask"), parse_scheme("4ask")};
    const Classifier stub = [](const Image&) { return one_hot(2, 0); };
    EXPECT_THROW(evaluate_manifest(other, stub, m), ConfigError);
    auto model = cnn::build_model(c.input_shape(), 3, 1);
    EXPECT_THROW(evaluate_model(c, model, m), ConfigError);
    fs::remove_all(dir);
}

TEST(Metrics, PerfectStub)
{
    ExperimentConfig c;
    std::vector<BundleDecisions> bundles;
    for (std::size_t b = 0; b < bundles_per_split(c); ++b) {
        const auto k = bundle_key(c, b);
        bundles.push_back({k.class_index, c.snr_list_db[static_cast<std::size_t>(k.snr_index)], b, {one_hot(8, k.class_index)}});
    }
    const auto m = evaluate_decisions(c, bundles);
    ASSERT_EQ(m.per_snr.size(), 8u);
    for (const auto& r : m.per_snr) {
        EXPECT_EQ(r.acc_fused(), 1.0);
        EXPECT_EQ(r.acc_no_fusion(), 1.0);
        for (int t = 0; t < 8; ++t) {
            EXPECT_EQ(r.fused.at(t, t), 100u);
            EXPECT_EQ(r.fused.row_total(t), 100u);
        }
    }
}

TEST(Metrics, UniformRandomStub)
{
    ExperimentConfig c;
    std::mt19937_64 g(5);
    std::uniform_int_distribution<int> pick(0, 7);
    std::vector<BundleDecisions> bundles;
    for (std::size_t b = 0; b < bundles_per_split(c); ++b) {
        const auto k = bundle_key(c, b);
        bundles.push_back({k.class_index, c.snr_list_db[static_cast<std::size_t>(k.snr_index)], b, {one_hot(8, pick(g))}});
    }
    const auto m = evaluate_decisions(c, bundles);
    for (const auto& r : m.per_snr) {
        EXPECT_EQ(r.fused.total(), 800u);
        EXPECT_NEAR(r.acc_fused(), 0.125, 0.02) << r.snr_db;
        EXPECT_NEAR(r.acc_fused(), static_cast<double>(r.fused.correct()) / static_cast<double>(r.fused.total()), 1e-12);
    }
}

TEST(Metrics, GeneratedStreamWithConstantStub)
{
    auto c = tiny_config();
    const Classifier always_first = [](const Image&) { return one_hot(2, 0); };
    const auto m = evaluate_generated(c, always_first);
    EXPECT_DOUBLE_EQ(m.per_snr[0].acc_fused(), 0.5);
    EXPECT_EQ(m.per_snr[0].fused.at(1, 0), 3u);
}

TEST(Metrics, IdenticalCopiesFuseToThemselves)
{
    ExperimentConfig c;
    c.scenario = Scenario::mimo_of(2, 4);
    std::mt19937_64 g(2);
    std::uniform_int_distribution<int> pick(0, 7);
    std::vector<BundleDecisions> bundles;
    for (std::size_t b = 0; b < 800; ++b) {
        const auto d = one_hot(8, pick(g));
        bundles.push_back({static_cast<int>(b % 8), 0.0, b, {d, d, d, d}});
    }
    const auto m = evaluate_decisions(c, bundles);
    EXPECT_EQ(m.per_snr[0].acc_fused(), m.per_snr[0].acc_no_fusion());
    EXPECT_EQ(m.per_snr[0].acc_first_antenna(), m.per_snr[0].acc_no_fusion());
    EXPECT_EQ(m.per_snr[0].per_antenna.total(), 3200u);
    EXPECT_EQ(m.per_snr[0].first_antenna.total(), 800u);
}

TEST(Metrics, UndecidedCountsAsError)
{
    auto c = tiny_config();
    c.scenario = Scenario::mimo_of(2, 4);
    c.fusion = FusionRule::n_out_of(3);
    std::vector<BundleDecisions> bundles{{0, 10.0, 1, {one_hot(2, 0), one_hot(2, 0), one_hot(2, 1), one_hot(2, 1)}},
                                         {0, 10.0, 2, {one_hot(2, 0), one_hot(2, 0), one_hot(2, 0), one_hot(2, 1)}}};
    const auto m = evaluate_decisions(c, bundles);
    EXPECT_EQ(m.per_snr[0].fused.undecided(0), 1u);
    EXPECT_DOUBLE_EQ(m.per_snr[0].acc_fused(), 0.5);
    EXPECT_EQ(m.per_snr[0].fused.row_total(0), 2u);
}

TEST(Report, CsvRoundTripAndFiles)
{
    ExperimentConfig c;
    std::mt19937_64 g(8);
    std::uniform_int_distribution<int> pick(0, 7);
    std::vector<BundleDecisions> bundles;
    for (std::size_t b = 0; b < 6400; b += 3) {
        const auto k = bundle_key(c, b);
        bundles.push_back({k.class_index, c.snr_list_db[static_cast<std::size_t>(k.snr_index)], b, {one_hot(8, pick(g))}});
    }
    const auto m = evaluate_decisions(c, bundles);
    const auto dir = scratch("report");
    const auto files = write_report(m, dir);
    EXPECT_EQ(files.size(), 2u + 8u + 1u);
    const auto rows = read_accuracy_csv(dir / "siso_theta1_accuracy.csv");
    ASSERT_EQ(rows.size(), m.per_snr.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_NEAR(rows[i].snr_db, m.per_snr[i].snr_db, 1e-12);
        EXPECT_NEAR(rows[i].acc_no_fusion, m.per_snr[i].acc_no_fusion(), 1e-12);
        EXPECT_NEAR(rows[i].acc_fused, m.per_snr[i].acc_fused(), 1e-12);
    }
    const auto heat = dir / "siso_theta1_confusion_p10.png";
    ASSERT_TRUE(fs::exists(heat));
    EXPECT_GT(fs::file_size(heat), 0u);
    const auto img = confusion_heatmap(m.per_snr[0].fused);
    EXPECT_EQ(img.height, 8u * 24u);
    EXPECT_TRUE(fs::exists(dir / "siso_theta1_confusion_m4.png"));
    EXPECT_TRUE(fs::exists(dir / "siso_theta1_accuracy.png"));
    fs::remove_all(dir);
}

TEST(Report, EmptyMetricsWriteNothing)
{
    Metrics empty;
    empty.scenario = "siso";
    empty.set_tag = "theta1";
    const auto dir = fs::temp_directory_path() / "modclass_test_empty_report";
    fs::remove_all(dir);
    EXPECT_THROW(write_report(empty, dir), DataError);
    EXPECT_FALSE(fs::exists(dir));
}
