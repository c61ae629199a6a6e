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

// Training and evaluation drivers. Classifiers are plain callables so the
// metrics code can be exercised with stubs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "../cnn.hpp"
#include "../decision.hpp"
#include "../error.hpp"
#include "../fusion.hpp"
#include "../parallel.hpp"
#include "../rng.hpp"
#include "config.hpp"
#include "dataset.hpp"

namespace modclass::harness {

// K x K counts plus one "undecided" column per true class.
class ConfusionMatrix {
public:
    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int k) : k_(k), counts_(static_cast<std::size_t>(k) * static_cast<std::size_t>(k + 1), 0) {}

    int size() const { return k_; }

    // predicted == -1 records an undecided outcome.
    void add(int truth, int predicted)
    {
        if (truth < 0 || truth >= k_ || predicted < -1 || predicted >= k_)
            throw DataError("confusion matrix index out of range");
        ++counts_[index(truth, predicted < 0 ? k_ : predicted)];
    }

    std::uint64_t at(int truth, int predicted) const { return counts_[index(truth, predicted)]; }
    std::uint64_t undecided(int truth) const { return counts_[index(truth, k_)]; }

    std::uint64_t row_total(int truth) const
    {
        std::uint64_t s = 0;
        for (int p = 0; p <= k_; ++p)
            s += counts_[index(truth, p)];
        return s;
    }

    std::uint64_t total() const
    {
        std::uint64_t s = 0;
        for (auto c : counts_)
            s += c;
        return s;
    }

    std::uint64_t correct() const
    {
        std::uint64_t s = 0;
        for (int i = 0; i < k_; ++i)
            s += at(i, i);
        return s;
    }

    // Undecided outcomes count as errors.
    double accuracy() const
    {
        const auto t = total();
        return t == 0 ? std::nan("") : static_cast<double>(correct()) / static_cast<double>(t);
    }

    double class_accuracy(int truth) const
    {
        const auto t = row_total(truth);
        return t == 0 ? std::nan("") : static_cast<double>(at(truth, truth)) / static_cast<double>(t);
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o)
    {
        if (o.k_ != k_)
            throw DataError("cannot merge confusion matrices of different size");
        for (std::size_t i = 0; i < counts_.size(); ++i)
            counts_[i] += o.counts_[i];
        return *this;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t index(int t, int p) const { return static_cast<std::size_t>(t) * static_cast<std::size_t>(k_ + 1) + static_cast<std::size_t>(p); }

    int k_ = 0;
    std::vector<std::uint64_t> counts_;
};

struct SnrResult {
    double snr_db = 0.0;
    ConfusionMatrix per_antenna;   // every antenna decision on its own
    ConfusionMatrix first_antenna; // antenna 0 only
    ConfusionMatrix fused;         // one entry per bundle

    double acc_no_fusion() const { return per_antenna.accuracy(); }
    double acc_first_antenna() const { return first_antenna.accuracy(); }
    double acc_fused() const { return fused.accuracy(); }

    friend bool operator==(const SnrResult&, const SnrResult&) = default;
};

struct Metrics {
    std::string scenario;
    std::string set_tag;
    std::string fusion_rule;
    std::vector<std::string> class_names;
    std::vector<SnrResult> per_snr; // ascending SNR

    const SnrResult& at_snr(double snr_db) const
    {
        for (const auto& r : per_snr)
            if (std::abs(r.snr_db - snr_db) < 1e-9)
                return r;
        throw ConfigError("no results at SNR " + std::to_string(snr_db) + " dB");
    }

    SnrResult overall() const
    {
        SnrResult o;
        o.snr_db = std::nan("");
        o.per_antenna = ConfusionMatrix(static_cast<int>(class_names.size()));
        o.first_antenna = o.per_antenna;
        o.fused = o.per_antenna;
        for (const auto& r : per_snr) {
            o.per_antenna += r.per_antenna;
            o.first_antenna += r.first_antenna;
            o.fused += r.fused;
        }
        return o;
    }

    friend bool operator==(const Metrics&, const Metrics&) = default;
};

using Classifier = std::function<DecisionVector(const Image&)>;

// Per-bundle classifier outputs, one decision vector per receive antenna.
struct BundleDecisions {
    int label = 0;
    double snr_db = 0.0;
    std::uint64_t seed = 0;
    std::vector<DecisionVector> decisions;
};

// Stream id mixed into the bundle seed for tie-break draws.
inline constexpr std::uint64_t kFusionStream = 0xF0510Bu;

class MetricsAccumulator {
public:
    MetricsAccumulator(std::string scenario, std::string set_tag, std::vector<std::string> class_names, FusionRule rule)
        : rule_(rule)
    {
        m_.scenario = std::move(scenario);
        m_.set_tag = std::move(set_tag);
        m_.fusion_rule = rule.name();
        m_.class_names = std::move(class_names);
    }

    void add(const BundleDecisions& b)
    {
        const int k = static_cast<int>(m_.class_names.size());
        for (const auto& d : b.decisions)
            if (static_cast<int>(d.size()) != k)
                throw DataError("classifier returned " + std::to_string(d.size()) + " scores for " + std::to_string(k) + " classes");
        auto it = results_.find(b.snr_db);
        if (it == results_.end()) {
            SnrResult r;
            r.snr_db = b.snr_db;
            r.per_antenna = ConfusionMatrix(k);
            r.first_antenna = ConfusionMatrix(k);
            r.fused = ConfusionMatrix(k);
            it = results_.emplace(b.snr_db, std::move(r)).first;
        }
        Rng rng = make_rng(derive_seed(b.seed, kFusionStream));
        const auto outcome = fuse_decisions(b.decisions, rule_, rng);
        for (int label : outcome.per_antenna_labels)
            it->second.per_antenna.add(b.label, label);
        it->second.first_antenna.add(b.label, outcome.per_antenna_labels.front());
        it->second.fused.add(b.label, outcome.undecided ? -1 : outcome.final_label);
    }

    Metrics finish() const
    {
        Metrics m = m_;
        for (const auto& [snr, r] : results_)
            m.per_snr.push_back(r);
        return m;
    }

private:
    FusionRule rule_;
    Metrics m_;
    std::map<double, SnrResult> results_;
};

inline Metrics evaluate_decisions(const ExperimentConfig& c, const std::vector<BundleDecisions>& bundles)
{
    MetricsAccumulator acc(c.scenario.tag(), c.set_tag(), c.class_names(), c.fusion);
    for (const auto& b : bundles)
        acc.add(b);
    return acc.finish();
}

// Generates the split bundle by bundle and classifies every antenna image.
// Bundles are processed in chunks so test images are never all resident.
// `classify` must be safe to call concurrently.
inline Metrics evaluate_generated(const ExperimentConfig& c, const Classifier& classify, Split split = Split::Test,
                                  unsigned threads = thread_count())
{
    MetricsAccumulator acc(c.scenario.tag(), c.set_tag(), c.class_names(), c.fusion);
    const std::size_t n = bundles_per_split(c);
    constexpr std::size_t chunk = 512;
    std::vector<BundleDecisions> buf;
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t m = std::min(chunk, n - start);
        buf.assign(m, {});
        parallel_for(
            m,
            [&](std::size_t i) {
                auto g = generate_bundle(c, split, start + i);
                auto& b = buf[i];
                b.label = g.label;
                b.snr_db = g.snr_db;
                b.seed = g.seed;
                for (const auto& img : g.images)
                    b.decisions.push_back(classify(img));
            },
            threads);
        for (const auto& b : buf)
            acc.add(b);
    }
    return acc.finish();
}

inline void check_class_names(const ExperimentConfig& c, const std::vector<std::string>& names, const std::string& what)
{
    if (names != c.class_names())
        throw ConfigError(what + " class set does not match the configured modulation set");
}

// Evaluates images listed in a manifest, grouping records by bundle.
inline Metrics evaluate_manifest(const ExperimentConfig& c, const Classifier& classify, const DatasetManifest& m,
                                 unsigned threads = thread_count())
{
    check_class_names(c, m.class_names, "dataset");
    std::map<std::size_t, std::vector<const ManifestRecord*>> groups;
    for (const auto& r : m.records)
        groups[r.bundle].push_back(&r);
    std::vector<std::vector<const ManifestRecord*>> bundles;
    for (auto& [id, recs] : groups) {
        std::sort(recs.begin(), recs.end(), [](auto* a, auto* b) { return a->antenna_index < b->antenna_index; });
        bundles.push_back(std::move(recs));
    }
    std::vector<BundleDecisions> out(bundles.size());
    parallel_for(
        bundles.size(),
        [&](std::size_t i) {
            auto& b = out[i];
            b.label = bundles[i].front()->label;
            b.snr_db = bundles[i].front()->snr_db;
            b.seed = bundles[i].front()->seed;
            for (const auto* r : bundles[i])
                b.decisions.push_back(classify(load_record_image(m, *r)));
        },
        threads);
    return evaluate_decisions(c, out);
}

inline Classifier model_classifier(const cnn::Model& model)
{
    return [&model](const Image& img) { return cnn::forward(model, img); };
}

inline cnn::Model train_model(const ExperimentConfig& c, std::span<const cnn::Sample> samples, cnn::History* history = nullptr,
                              std::function<void(const cnn::EpochRecord&)> on_epoch = {})
{
    auto model = cnn::build_model<float>(c.input_shape(), c.num_classes(), c.train.seed, c.train.dropout_rate);
    for (const auto& s : samples)
        if (s.label < 0 || s.label >= c.num_classes())
            throw DataError("training label " + std::to_string(s.label) + " out of range");
    auto h = cnn::train(model, samples, c.train, std::move(on_epoch));
    if (history)
        *history = std::move(h);
    return model;
}

// Trains on a train-split manifest, then writes the model and its history CSV.
inline cnn::History run_training(const ExperimentConfig& c, const DatasetManifest& m, const std::filesystem::path& model_path,
                                 const std::filesystem::path& history_path,
                                 std::function<void(const cnn::EpochRecord&)> on_epoch = {})
{
    if (m.split != "train")
        throw ConfigError("training needs a train-split dataset, got '" + m.split + "'");
    check_class_names(c, m.class_names, "dataset");
    const auto samples = load_samples(m);
    cnn::History history;
    const auto model = train_model(c, samples, &history, std::move(on_epoch));
    cnn::save_model(model, model_path);
    cnn::write_history_csv(history_path, history);
    return history;
}

// Evaluates a trained model on a test-split manifest.
inline Metrics evaluate_model(const ExperimentConfig& c, const cnn::Model& model, const DatasetManifest& m)
{
    if (m.split != "test")
        throw ConfigError("evaluation needs a test-split dataset, got '" + m.split + "'");
    if (model.num_classes() != c.num_classes())
        throw ConfigError("model has " + std::to_string(model.num_classes()) + " outputs but the configured set has " +
                          std::to_string(c.num_classes()) + " classes");
    return evaluate_manifest(c, model_classifier(model), m);
}

struct ExperimentResult {
    cnn::Model model;
    cnn::History history;
    Metrics metrics;
};

// Generate training data in memory, train, then evaluate on the test split.
inline ExperimentResult run_experiment(const ExperimentConfig& c, std::function<void(const cnn::EpochRecord&)> on_epoch = {})
{
    validate(c);
    cnn::History history;
    auto model = [&] {
        const auto train = generate_samples(c, Split::Train);
        return train_model(c, train, &history, std::move(on_epoch));
    }();
    auto metrics = evaluate_generated(c, model_classifier(model), Split::Test);
    return {std::move(model), std::move(history), std::move(metrics)};
}

} // namespace modclass::harness
