#include <gtest/gtest.h>

#include "freqsp/nn/dataset.hpp"
#include "freqsp/nn/serialize.hpp"
#include "freqsp/nn/train.hpp"
#include "freqsp/process.hpp"
#include "test_util.hpp"

using namespace freqsp;
using namespace freqsp::nn;

namespace {

FreqSPConfig toy16() {
    FreqSPConfig c;
    c.depth = 2;
    c.input_size = 16;
    c.patch_block = 4;
    c.patch_grid = 4;
    return c;
}

std::vector<Sample> toy_samples(int n) {
    std::vector<Sample> out;
    for (int i = 0; i < n; ++i) {
        const double noise = 0.02 + 0.1 * i / n;
        out.push_back({prepare_input(testutil::textured_frame(16, 16, noise, 100 + i)), 3.0 * i / n});
    }
    return out;
}

} // namespace

TEST(Restitch, IdentityWhenRegionsAreBlocks) {
    const auto f = testutil::random_frame(64, 64, 1);
    EXPECT_EQ(patch_restitch(f, 16, 4, PatchMode::TopLeft), f);
}

TEST(Restitch, TopLeftMatchesIndexOracle) {
    const auto f = testutil::random_frame(48, 40, 2);
    const auto out = patch_restitch(f, 4, 4, PatchMode::TopLeft);
    ASSERT_EQ(out.width(), 16);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                ASSERT_EQ(out.at(c, y, x), f.at(c, (y / 4) * 10 + y % 4, (x / 4) * 12 + x % 4));
}

TEST(Restitch, RandomIsSeededAndStaysInRegion) {
    const auto f = testutil::random_frame(64, 64, 3);
    const auto a = patch_restitch(f, 8, 4, PatchMode::Random, 7);
    EXPECT_EQ(a, patch_restitch(f, 8, 4, PatchMode::Random, 7));
    EXPECT_NE(a, patch_restitch(f, 8, 4, PatchMode::Random, 8));
    EXPECT_THROW(patch_restitch(f, 32, 4, PatchMode::TopLeft), ContractError);
}

TEST(Evaluate, PearsonAndRmse) {
    const std::vector<double> g{0.0, 0.5, 1.5, 3.0};
    auto m = evaluate(g, g);
    EXPECT_DOUBLE_EQ(m.plcc, 1.0);
    EXPECT_EQ(m.rmse, 0.0);
    std::vector<double> neg, aff;
    for (double v : g) neg.push_back(-v), aff.push_back(2 * v + 3);
    EXPECT_DOUBLE_EQ(evaluate(neg, g).plcc, -1.0);
    m = evaluate(aff, g);
    EXPECT_NEAR(m.plcc, 1.0, 1e-15);
    EXPECT_GT(m.rmse, 0.0);
    EXPECT_THROW(evaluate(g, std::vector<double>{1, 1, 1, 1}), ContractError);
    EXPECT_THROW(evaluate(std::vector<double>{1}, std::vector<double>{1}), ContractError);
}

TEST(Train, ZeroStepsLeavesInitialisation) {
    FreqSP model(toy16(), 4);
    const std::string before = checkpoint_bytes(model);
    TrainConfig cfg;
    cfg.steps = 0;
    train(model, toy_samples(4), cfg);
    EXPECT_EQ(checkpoint_bytes(model), before);
}

TEST(Train, SeededRunsAreBitwiseIdentical) {
    const auto data = toy_samples(8);
    TrainConfig cfg;
    cfg.steps = 12;
    cfg.batch = 4;
    cfg.seed = 3;
    FreqSP a(toy16(), 1), b(toy16(), 1);
    train(a, data, cfg);
    train(b, data, cfg);
    EXPECT_EQ(checkpoint_bytes(a), checkpoint_bytes(b));
    EXPECT_NE(checkpoint_bytes(a), checkpoint_bytes(FreqSP(toy16(), 1)));
}

TEST(Train, LossDecreases) {
    const auto data = toy_samples(8);
    TrainConfig cfg;
    cfg.steps = 200;
    cfg.batch = 8;
    cfg.lr = 3e-3;
    FreqSP model(toy16(), 2);
    const auto hist = train(model, data, cfg);
    ASSERT_GE(hist.size(), 2u);
    EXPECT_LT(hist.back().loss, hist.front().loss);
}

TEST(Train, NonFiniteLossAborts) {
    auto data = toy_samples(2);
    data[0].label = std::nan("");
    TrainConfig cfg;
    cfg.steps = 3;
    FreqSP model(toy16(), 2);
    EXPECT_THROW(train(model, data, cfg), TrainError);
}

TEST(Train, ConfigValidation) {
    FreqSP model(toy16(), 2);
    TrainConfig cfg;
    cfg.batch = 0;
    EXPECT_THROW(train(model, toy_samples(2), cfg), ConfigError);
    EXPECT_THROW(train(model, {}, TrainConfig{}), ContractError);
}

TEST(AdamWOptimizer, DecoupledDecayWithZeroGradient) {
    Var w = parameter(Tensor({1}, 2.0));
    TrainConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.5;
    AdamW opt({w}, cfg);
    opt.step();
    EXPECT_NEAR(w.value()[0], 2.0 - 0.1 * 0.5 * 2.0, 1e-15);
}

TEST(Dataset, PredictVideoAveragesFrames) {
    const FreqSP model(toy16(), 6);
    std::vector<media::Frame> fs{testutil::random_frame(32, 32, 1), testutil::random_frame(32, 32, 2)};
    const double p = predict_video(model, testutil::video_of(fs));
    double manual = 0;
    for (const auto& f : fs) manual += model.predict(patch_restitch(f, 4, 4, PatchMode::TopLeft));
    EXPECT_NEAR(p, manual / 2, 1e-12);
}
