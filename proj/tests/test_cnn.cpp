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

#include <cmath>
#include <filesystem>
#include <numeric>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "modclass/cnn.hpp"

using namespace modclass;
using namespace modclass::cnn;

namespace {

Image random_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed)
{
    Image img(h, w, c);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0, 1);
    for (auto& v : img.data)
        v = u(rng);
    return img;
}

// Final dense layer index in the default architecture.
std::size_t head_index(const Model& m)
{
    return m.num_layers() - 2;
}

} // namespace

TEST(GradientCheck, EveryLayerKind)
{
    for (const auto& c : gradcheck::layer_cases()) {
        const auto rep = gradcheck::check_layer(*c.layer, 11);
        EXPECT_LT(rep.max_rel_error, 1e-4) << c.name;
        EXPECT_GT(rep.checked, 0u);
    }
}

TEST(GradientCheck, TinyNetwork)
{
    auto net = gradcheck::tiny_network(3);
    const auto rep = gradcheck::check_network(net, 5);
    EXPECT_LT(rep.max_rel_error, 1e-4);
    EXPECT_EQ(rep.checked, net.params().size());
}

TEST(Model, DefaultArchitectureShapes)
{
    auto m = build_model(Shape{3, 64, 64}, 8, 1);
    EXPECT_EQ(m.num_classes(), 8);
    EXPECT_EQ(m.layer(m.num_layers() - 1).kind(), LayerKind::Softmax);
    const auto d = forward(m, random_image(64, 64, 3, 1));
    ASSERT_EQ(d.size(), 8u);
    EXPECT_TRUE(d.valid());
    EXPECT_THROW(build_model(Shape{3, 16, 16}, 8, 1), ConfigError);
    EXPECT_THROW(build_model(Shape{3, 64, 64}, 1, 1), ConfigError);
}

TEST(Model, SeedDeterminesWeights)
{
    auto a = build_model(Shape{3, 64, 64}, 8, 9);
    auto b = build_model(Shape{3, 64, 64}, 8, 9);
    auto c = build_model(Shape{3, 64, 64}, 8, 10);
    EXPECT_TRUE(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
    EXPECT_FALSE(std::equal(a.params().begin(), a.params().end(), c.params().begin()));
}

TEST(Model, ConstantLogitsGiveUniformProbabilities)
{
    auto m = build_model(Shape{3, 64, 64}, 8, 2);
    auto head = m.layer_params(head_index(m));
    std::fill(head.begin(), head.end(), 0.25f);
    const std::size_t nw = head.size() - 8;
    std::fill(head.begin(), head.begin() + static_cast<std::ptrdiff_t>(nw), 0.0f);
    const auto d = forward(m, random_image(64, 64, 3, 4));
    for (double p : d.probs)
        EXPECT_NEAR(p, 0.125, 1e-7);
}

TEST(Model, InputShapeChecked)
{
    auto m = build_model(Shape{3, 64, 64}, 8, 2);
    EXPECT_THROW(forward(m, random_image(32, 64, 3, 1)), DataError);
    EXPECT_THROW(forward(m, random_image(64, 64, 1, 1)), DataError);
}

TEST(Softmax, StableForHugeLogits)
{
    Softmax<double> s(Shape{4, 1, 1});
    LayerState<double> st;
    const std::vector<double> in{1e4, -1e4, 1e4 - 1, 0};
    std::vector<double> out(4);
    s.forward({}, in.data(), out.data(), st, Mode::Inference, nullptr);
    double sum = 0;
    for (double v : out) {
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GE(v, 0.0);
        sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_GT(out[0], out[2]);
}

TEST(Loss, UniformAndPerfect)
{
    Network<double> net(Shape{1, 4, 4});
    net.dense(8).softmax();
    std::vector<Example<double>> ex(2, Example<double>{std::vector<double>(16, 0.3), 5});
    auto g = loss_and_grads<double>(net, ex); // zero weights: uniform output
    EXPECT_NEAR(g.loss, std::log(8.0), 1e-12);

    auto p = net.layer_params(0);
    p[p.size() - 8 + 5] = 60.0; // bias of class 5
    g = loss_and_grads<double>(net, ex);
    EXPECT_LT(g.loss, 1e-20);
    ex[0].label = 8;
    EXPECT_THROW(loss_and_grads<double>(net, ex), DataError);
    EXPECT_THROW(loss_and_grads<double>(net, std::span<const Example<double>>{}), DataError);
}

TEST(Dropout, InferenceEqualsMaskAverage)
{
    Network<double> net(Shape{1, 4, 4});
    net.dense(32).relu().dropout(0.4).dense(3);
    net.initialize(7);
    auto ws = net.make_workspace();
    std::mt19937_64 g(1);
    std::normal_distribution<double> nd;
    for (auto& v : ws.acts[0])
        v = nd(g);
    const auto inf = std::vector<double>(net.forward(ws, Mode::Inference, nullptr).begin(), net.forward(ws, Mode::Inference, nullptr).end());
    const int trials = 20000;
    std::vector<double> mean(3, 0.0), sq(3, 0.0);
    Rng rng = make_rng(3);
    for (int t = 0; t < trials; ++t) {
        const auto out = net.forward(ws, Mode::Training, &rng);
        for (std::size_t i = 0; i < 3; ++i) {
            mean[i] += out[i] / trials;
            sq[i] += out[i] * out[i] / trials;
        }
    }
    for (std::size_t i = 0; i < 3; ++i) {
        const double se = std::sqrt((sq[i] - mean[i] * mean[i]) / trials);
        EXPECT_LT(std::abs(mean[i] - inf[i]), 5 * se + 1e-12) << i;
    }
}

TEST(Train, MemorizesTinySet)
{
    std::vector<Sample> data;
    for (int i = 0; i < 32; ++i)
        data.push_back({random_image(32, 32, 3, 100 + static_cast<std::uint64_t>(i)), i % 4});
    auto m = build_model(Shape{3, 32, 32}, 4, 1, 0.0);
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 8;
    cfg.dropout_rate = 0.0;
    cfg.validation_fraction = 0.0;
    const auto h = train(m, data, cfg);
    ASSERT_EQ(h.size(), 200u);
    EXPECT_TRUE(std::isnan(h.back().val_acc));
    int correct = 0;
    for (const auto& s : data)
        correct += predict(m, s.image) == s.label;
    EXPECT_EQ(correct, 32);
    EXPECT_LT(h.back().train_loss, h.front().train_loss);
}

TEST(Train, ZeroLearningRateKeepsWeights)
{
    std::vector<Sample> data;
    for (int i = 0; i < 10; ++i)
        data.push_back({random_image(32, 32, 3, static_cast<std::uint64_t>(i)), i % 2});
    auto m = build_model(Shape{3, 32, 32}, 2, 1);
    const std::vector<float> before(m.params().begin(), m.params().end());
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 0.0;
    train(m, data, cfg);
    EXPECT_TRUE(std::equal(before.begin(), before.end(), m.params().begin()));
}

TEST(Train, DeterministicAndValidatesInput)
{
    std::vector<Sample> data;
    for (int i = 0; i < 24; ++i)
        data.push_back({random_image(32, 32, 3, static_cast<std::uint64_t>(i)), i % 3});
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 5;
    auto a = build_model(Shape{3, 32, 32}, 3, 4);
    auto b = a;
    const auto ha = train(a, data, cfg);
    const auto hb = train(b, data, cfg);
    EXPECT_TRUE(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
    EXPECT_EQ(ha.back().train_loss, hb.back().train_loss);

    EXPECT_THROW(train(a, std::span<const Sample>{}, cfg), DataError);
    data[0].label = 7;
    EXPECT_THROW(train(a, data, cfg), DataError);
    cfg.dropout_rate = 1.0;
    EXPECT_THROW(train(a, data, cfg), ConfigError);
}

TEST(ModelFile, RoundTripBitExact)
{
    auto m = build_model(Shape{3, 64, 64}, 8, 5);
    const auto bytes = encode_model(m);
    const auto back = decode_model(bytes);
    ASSERT_EQ(back.num_layers(), m.num_layers());
    for (std::uint64_t i = 0; i < 100; ++i) {
        const auto img = random_image(64, 64, 3, 1000 + i);
        EXPECT_EQ(forward(m, img).probs, forward(back, img).probs);
    }
    const auto path = std::filesystem::temp_directory_path() / "modclass_model_rt.cnn1";
    save_model(m, path);
    const auto loaded = load_model(path);
    EXPECT_TRUE(std::equal(m.params().begin(), m.params().end(), loaded.params().begin()));
    std::filesystem::remove(path);
}

TEST(ModelFile, CorruptInputs)
{
    auto m = build_model(Shape{3, 32, 32}, 2, 5);
    const auto bytes = encode_model(m);
    auto truncated = bytes;
    truncated.resize(bytes.size() / 2);
    try {
        decode_model(truncated, "t.cnn1");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
    }
    auto version = bytes;
    version[4] = 9;
    try {
        decode_model(version);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
    }
    auto magic = bytes;
    magic[0] = 'X';
    EXPECT_THROW(decode_model(magic), DataError);
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(decode_model(trailing), DataError);
}

TEST(History, CsvColumns)
{
    const auto path = std::filesystem::temp_directory_path() / "modclass_hist.csv";
    write_history_csv(path, {{1, 0.5, 0.75}});
    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    EXPECT_EQ(header, "epoch,train_loss,val_acc");
    EXPECT_EQ(row.substr(0, 6), "1,0.5,");
    std::filesystem::remove(path);
}
