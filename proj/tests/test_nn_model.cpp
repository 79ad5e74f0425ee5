#include <gtest/gtest.h>

#include "freqsp/nn/loss.hpp"
#include "freqsp/nn/model.hpp"
#include "freqsp/nn/serialize.hpp"
#include "freqsp/process.hpp"
#include "test_util.hpp"

using namespace freqsp;
using namespace freqsp::nn;
using testutil::gradient_check;
using testutil::random_tensor;

namespace {

// 16x16 input: stem /2, one stride-2 block, HF pools 2 x 2.
FreqSPConfig toy16() {
    FreqSPConfig c;
    c.depth = 3;
    c.se_free_prefix = 1;
    c.input_size = 16;
    c.patch_block = 4;
    c.patch_grid = 4;
    return c;
}

std::vector<Var> leaves(const FreqSP& m) { return m.parameters(); }

} // namespace

TEST(Config, DefaultsAndPresetValidate) {
    EXPECT_NO_THROW(FreqSPConfig{}.validate());
    EXPECT_NO_THROW(FreqSPConfig::full().validate());
    EXPECT_EQ(FreqSPConfig{}.feature_size(), 16);
    EXPECT_EQ(FreqSPConfig{}.hf_size(), 16);
    EXPECT_EQ(FreqSPConfig::full().feature_size(), 8);
    EXPECT_EQ(FreqSPConfig::full().hf_size(), 8);
    EXPECT_EQ(FreqSPConfig::full().feature_channels(), 160);
}

TEST(Config, MisalignedHfIsRejected) {
    FreqSPConfig c;
    c.hf_pool_strides = {2, 4};
    EXPECT_THROW(c.validate(), ConfigError);
    c.hf_enabled = false;
    EXPECT_NO_THROW(c.validate());
    c.patch_grid = 3;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, JsonRoundTrip) {
    const FreqSPConfig p = FreqSPConfig::full();
    const nlohmann::json j = p;
    EXPECT_EQ(nlohmann::json(j.get<FreqSPConfig>()).dump(), j.dump());
}

TEST(Block, ForcedUnitGateEqualsPlainBlock) {
    std::mt19937_64 rng(1);
    const InvBlockParams se = make_inv_block(4, 8, 4, 1, true, 4, rng);
    InvBlockParams plain = se;
    plain.se_reduce.reset();
    plain.se_expand.reset();
    const Var x = constant(random_tensor({2, 4, 6, 6}, 2));
    const double one = 1.0;
    EXPECT_EQ(inv_lb_se_block(x, se, &one).value(), inv_lb_se_block(x, plain).value());
    EXPECT_NE(inv_lb_se_block(x, se).value(), inv_lb_se_block(x, plain).value());
}

TEST(Block, StrideTwoHalvesWithoutResidual) {
    std::mt19937_64 rng(3);
    const InvBlockParams p = make_inv_block(4, 8, 4, 2, false, 4, rng);
    EXPECT_FALSE(p.residual);
    const Var y = inv_lb_se_block(constant(random_tensor({1, 4, 8, 8}, 4)), p);
    EXPECT_EQ(y.shape(), (Shape{1, 4, 4, 4}));
    EXPECT_TRUE(make_inv_block(4, 8, 4, 1, false, 4, rng).residual);
    EXPECT_FALSE(make_inv_block(4, 8, 6, 1, false, 4, rng).residual);
}

TEST(Block, ResidualAddsInput) {
    std::mt19937_64 rng(5);
    InvBlockParams p = make_inv_block(3, 6, 3, 1, false, 4, rng);
    p.project.weight.value().fill(0.0);
    const Var x = constant(random_tensor({1, 3, 4, 4}, 6));
    EXPECT_EQ(inv_lb_se_block(x, p).value(), x.value());
}

TEST(GradCheck, InvBlockWithSe) {
    std::mt19937_64 rng(7);
    const InvBlockParams p = make_inv_block(4, 8, 4, 1, true, 4, rng);
    Var x = parameter(random_tensor({2, 4, 5, 5}, 8));
    std::vector<Var> ls{x, p.expand.weight, p.expand.bias, p.depthwise.weight, p.depthwise.bias,
                        p.se_reduce->weight, p.se_reduce->bias, p.se_expand->weight, p.se_expand->bias,
                        p.project.weight, p.project.bias};
    const Tensor w = random_tensor({2, 4, 5, 5}, 9);
    EXPECT_LT(gradient_check(ls, [&] { return dot(inv_lb_se_block(x, p), w); }), 1e-5);
}

TEST(GradCheck, FullToyModel) {
    const FreqSP model(toy16(), 11);
    const Tensor img = random_tensor({2, 3, 16, 16}, 12, 0.0, 1.0), hf = random_tensor({2, 3, 16, 16}, 13, -0.2, 0.2);
    const std::vector<double> gts{0.5, 2.0};
    auto f = [&] { return overall_loss(model.forward(constant(img), constant(hf)), gts, 0.3); };
    // small step: with many units a 1e-4 step straddles leaky ReLU kinks
    EXPECT_LT(gradient_check(leaves(model), f, 1e-6), 1e-4);
}

TEST(Model, HfBranchOfConstantFrameIsZero) {
    const FreqSP model(FreqSPConfig{}, 3);
    const Var out = model.hf_branch(media::Frame(64, 64, media::ColorSpace::RGB, 0.42));
    EXPECT_EQ(out.shape(), (Shape{1, FreqSPConfig{}.feature_channels(), 16, 16}));
    for (double v : out.value().data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Model, HfBranchMatchesFeatureGrid) {
    const FreqSP model(FreqSPConfig{}, 3);
    const auto in = prepare_input(testutil::random_frame(64, 64, 1));
    const Var feats = model.features(constant(stack({&in.image})));
    const Var hf = model.hf_branch(constant(stack({&in.hf})));
    EXPECT_EQ(feats.shape(), hf.shape());
    EXPECT_EQ(hf.shape()[2], 64 / 4);
}

TEST(Model, DisabledHfIgnoresResidual) {
    FreqSPConfig cfg;
    cfg.hf_enabled = false;
    const FreqSP model(cfg, 4);
    const auto in = prepare_input(testutil::random_frame(64, 64, 2));
    const Var a = model.forward(constant(stack({&in.image})), constant(stack({&in.hf})));
    const Var b = model.forward(constant(stack({&in.image})), constant(Tensor({1, 3, 64, 64}, 5.0)));
    EXPECT_EQ(a.value(), b.value());
    const FreqSP with(FreqSPConfig{}, 4);
    EXPECT_NE(with.forward(constant(stack({&in.image})), constant(stack({&in.hf}))).value(), a.value());
}

TEST(Model, IdenticalFramesGiveIdenticalPredictions) {
    const FreqSP model(FreqSPConfig{}, 5);
    const auto in = prepare_input(testutil::random_frame(64, 64, 3));
    const Var y = model.forward({&in, &in, &in});
    ASSERT_EQ(y.shape(), (Shape{3, 1, 1, 1}));
    EXPECT_EQ(y.value()[0], y.value()[1]);
    EXPECT_EQ(y.value()[1], y.value()[2]);
    EXPECT_EQ(model.forward({&in}).value()[0], y.value()[0]);
}

TEST(Model, SeedDeterminesInitialisation) {
    const FreqSP a(FreqSPConfig{}, 9), b(FreqSPConfig{}, 9), c(FreqSPConfig{}, 10);
    EXPECT_EQ(checkpoint_bytes(a), checkpoint_bytes(b));
    EXPECT_NE(checkpoint_bytes(a), checkpoint_bytes(c));
}

TEST(Model, WrongInputSizeIsRejected) {
    const FreqSP model(FreqSPConfig{}, 0);
    EXPECT_THROW(model.forward(constant(Tensor({1, 3, 32, 32})), constant(Tensor({1, 3, 32, 32}))), ContractError);
}

TEST(Model, FullPresetBuilds) {
    const FreqSP model(FreqSPConfig::full(), 0);
    EXPECT_EQ(model.blocks().size(), 15u);
    EXPECT_FALSE(model.blocks()[2].se_reduce.has_value());
    EXPECT_TRUE(model.blocks()[3].se_reduce.has_value());
    EXPECT_GT(model.parameter_count(), 2'000'000);
}

TEST(Profile, FlopFormula) {
    EXPECT_EQ(conv_flops(8, 8, 1, 1, 16, 16), 32768);
    EXPECT_EQ(conv_flops(8, 8, 3, 8, 16, 16), 2LL * 9 * 8 * 256);
}

TEST(Profile, ParamsAgreeWithModel) {
    const FreqSP model(FreqSPConfig{}, 0);
    long long params = 0;
    for (const auto& l : model.profile()) params += l.params;
    EXPECT_EQ(params, model.parameter_count());
}

TEST(Serialize, TensorRoundTrip) {
    process::TempDir tmp;
    const Tensor t = random_tensor({2, 3, 4}, 1);
    save_tensor(t, tmp.path() / "t.fqt");
    EXPECT_EQ(load_tensor(tmp.path() / "t.fqt"), t);
    std::ofstream(tmp.path() / "bad.fqt") << "nope";
    EXPECT_THROW(load_tensor(tmp.path() / "bad.fqt"), IoError);
}

TEST(Serialize, CheckpointRoundTrip) {
    process::TempDir tmp;
    const FreqSP model(toy16(), 21);
    save_checkpoint(model, tmp.path() / "m.ckpt");
    const FreqSP back = load_checkpoint(tmp.path() / "m.ckpt");
    EXPECT_EQ(checkpoint_bytes(back), checkpoint_bytes(model));
    const Tensor img = random_tensor({1, 3, 16, 16}, 1, 0, 1);
    EXPECT_EQ(back.forward(constant(img), constant(img)).value(), model.forward(constant(img), constant(img)).value());
    std::string bytes = checkpoint_bytes(model);
    bytes.resize(bytes.size() - 5);
    std::ofstream(tmp.path() / "cut.ckpt", std::ios::binary) << bytes;
    EXPECT_THROW(load_checkpoint(tmp.path() / "cut.ckpt"), IoError);
}
