#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mrsr/core/grad_check.hpp"
#include "mrsr/data/phantom.hpp"
#include "mrsr/sr/training.hpp"
#include "support/oracles.hpp"

using namespace mrsr;
using namespace mrsr::sr;

namespace {

// Tiny frozen extractors at a 16x16 HR extent.
struct ToyExtractors {
    vit::ViTConfig vc;
    vit::ViTState vs;
    disentangle::AEConfig ac;
    disentangle::AEState as;

    explicit ToyExtractors(std::uint64_t seed, std::size_t extent = 16) {
        Rng rng(seed);
        vc.patch_size = 4;
        vc.extents = {extent, extent};
        vc.embed_dim = 8;
        vc.heads = 2;
        vc.layers = 1;
        vc.mlp_hidden = 8;
        vs = vit::init_state(vc, rng);
        ac.input_extent = extent;
        ac.widths = {2, 2, 2, 2};
        ac.tex_dim = 3;
        ac.decoder_channels = 2;
        ac.disc = {2, 1};
        as = disentangle::init_state(ac, rng);
        ParameterList p = vs.parameters();
        set_trainable(p, false);
        ParameterList q = as.parameters();
        set_trainable(q, false);
    }

    Extractors view() { return {&vs, &vc, &as, &ac}; }
};

Tensor rand_batch(std::size_t b, std::size_t h, std::size_t w, std::mt19937_64& rng) {
    return Tensor({b, 1, h, w}, oracle::random_vec(b * h * w, rng, 0.0, 1.0));
}

std::vector<double> snapshot(const ParameterList& p) {
    std::vector<double> out;
    for (const auto& t : p) out.insert(out.end(), t.tensor.values().begin(), t.tensor.values().end());
    return out;
}

}  // namespace

TEST(Generator, OutputIsScaleTimesInput) {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::size_t> ext(3, 14);
    for (int m : {2, 4}) {
        GeneratorConfig c;
        c.scale = m;
        c.residual_blocks = 1;
        c.base_channels = 3;
        Rng init(2);
        Generator g = Generator::make(c, init);
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t h = ext(rng), w = ext(rng);
            Image lr(h, w);
            const Image hr = sr_generate(g, lr);
            EXPECT_EQ(hr.height, m * h);
            EXPECT_EQ(hr.width, m * w);
        }
    }
}

TEST(Generator, ScaleMustBePowerOfTwo) {
    for (int m : {0, 1, 3, 6, -2}) {
        GeneratorConfig c;
        c.scale = m;
        Rng rng(3);
        try {
            Generator::make(c, rng);
            FAIL() << "scale " << m;
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find("power-of-two"), std::string::npos);
        }
    }
}

TEST(Generator, UpsampleStagesAreLogOfScale) {
    for (int m : {2, 4, 8}) {
        GeneratorConfig c;
        c.scale = m;
        EXPECT_EQ(c.upsample_stages(), static_cast<std::size_t>(std::log2(m)));
    }
}

TEST(Generator, ZeroResidualBlocksIsAllowed) {
    GeneratorConfig c;
    c.residual_blocks = 0;
    c.base_channels = 4;
    Rng rng(4);
    Generator g = Generator::make(c, rng);
    EXPECT_EQ(g.blocks.size(), 0u);
    EXPECT_EQ(sr_generate(g, Image(5, 6)).height, 10u);
}

TEST(Generator, BicubicSkipStartsAtBicubic) {
    GeneratorConfig c;
    c.residual_blocks = 1;
    c.base_channels = 3;
    c.bicubic_skip = true;
    Rng rng(5);
    Generator g = Generator::make(c, rng);
    const Image lr = degrade(synth_phantom(6, 32), 2);
    const Image out = sr_generate(g, lr);
    const Image bic = bicubic_resize(lr, 32, 32);
    for (std::size_t i = 0; i < out.pixels.size(); ++i) EXPECT_NEAR(out.pixels[i], bic.pixels[i], 1e-15);
}

TEST(Generator, InputShapeChecked) {
    GeneratorConfig c;
    c.residual_blocks = 0;
    c.base_channels = 2;
    Rng rng(7);
    Generator g = Generator::make(c, rng);
    EXPECT_THROW(g(Tensor::zeros({1, 2, 4, 4}), false), DimensionError);
    EXPECT_THROW(g(Tensor::zeros({4, 4}), false), DimensionError);
}

TEST(SrLoss, WeightedTotal) {
    EXPECT_NEAR(total_sr_loss(0.1, 0.2, 0.3, 0.4, LossWeights{}), 0.96, 1e-12);
    EXPECT_NEAR(total_sr_loss(Tensor::scalar(0.1), Tensor::scalar(0.2), Tensor::scalar(0.3), Tensor::scalar(0.4),
                              LossWeights{})
                    .item(),
                0.96, 1e-12);
    EXPECT_NEAR(total_sr_loss(0.1, 0.2, 0.3, 0.4, LossWeights{0, 0, 0}), 0.1, 1e-15);
    EXPECT_THROW((LossWeights{-1, 0, 0}).validate(), ConfigError);
}

TEST(SrLoss, FeatureLossExamples) {
    const Tensor f({3}, {1, 2, 3});
    EXPECT_NEAR(vit_feature_loss(f, f).item(), 0.0, 1e-15);
    EXPECT_NEAR(vit_feature_loss(f, scale(f, 2.5)).item(), 0.0, 1e-15);
    EXPECT_NEAR(vit_feature_loss(f, neg(f)).item(), 2.0, 1e-15);
    EXPECT_NEAR(vit_feature_loss(Tensor({2}, {1, 0}), Tensor({2}, {0, 1})).item(), 1.0, 1e-15);
    EXPECT_THROW(vit_feature_loss(f, Tensor::zeros({2})), DimensionError);
    // Rows: mean of per-row losses (0 and 2).
    EXPECT_NEAR(vit_feature_loss(Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2, 2}, {1, 0, 0, -1})).item(), 1.0, 1e-15);
}

TEST(SrLoss, StructureTextureOfIdenticalCodesIsZero) {
    std::mt19937_64 rng(8);
    disentangle::LatentCode a{Tensor({2, 4, 4}, oracle::random_vec(32, rng)), Tensor({2, 3}, oracle::random_vec(6, rng))};
    auto [ls, lt] = structure_texture_loss(a, a);
    EXPECT_NEAR(ls.item(), 0.0, 1e-14);
    EXPECT_NEAR(lt.item(), 0.0, 1e-14);
}

TEST(SrLoss, SemanticTermsVanishAtBicubicOutput) {
    ToyExtractors toy(9);
    GeneratorConfig c;
    c.residual_blocks = 1;
    c.base_channels = 3;
    c.bicubic_skip = true;
    Rng rng(10);
    Generator g = Generator::make(c, rng);
    nn::Discriminator d = nn::Discriminator::make({2, 1}, rng);
    std::mt19937_64 r(11);
    const Tensor lr = rand_batch(2, 8, 8, r);
    const SRGraph f = sr_forward(g, d, toy.view(), lr, LossWeights{}, false);
    EXPECT_NEAR(f.vit.item(), 0.0, 1e-12);
    EXPECT_NEAR(f.str.item(), 0.0, 1e-12);
    EXPECT_NEAR(f.tex.item(), 0.0, 1e-12);
    EXPECT_NEAR(f.adv.item(), std::log(2.0), 1e-12);
}

TEST(SrTraining, RequiresFrozenExtractors) {
    ToyExtractors toy(12);
    ParameterList vp = toy.vs.parameters();
    vp[0].tensor.set_requires_grad(true);
    GeneratorConfig c;
    c.residual_blocks = 0;
    c.base_channels = 2;
    Rng rng(13);
    Generator g = Generator::make(c, rng);
    nn::Discriminator d = nn::Discriminator::make({2, 1}, rng);
    std::mt19937_64 r(14);
    const Tensor lr = rand_batch(2, 8, 8, r), hr = rand_batch(2, 16, 16, r);
    train::OptimizerState go, dopt;
    EXPECT_THROW(sr_train_step(g, d, toy.view(), lr, hr, LossWeights{}, go, dopt), ConfigError);
}

TEST(SrTraining, ExtractorsStayBitwiseUnchanged) {
    ToyExtractors toy(15);
    const auto vit_before = snapshot(toy.vs.parameters());
    const auto ae_before = snapshot(toy.as.parameters());
    GeneratorConfig c;
    c.residual_blocks = 1;
    c.base_channels = 3;
    Rng rng(16);
    Generator g = Generator::make(c, rng);
    nn::Discriminator d = nn::Discriminator::make({2, 1}, rng);
    std::mt19937_64 r(17);
    const Tensor lr = rand_batch(2, 8, 8, r), hr = rand_batch(2, 16, 16, r);
    train::OptimizerState go, dopt;
    go.weight_decay = dopt.weight_decay = 0.1;
    const auto gen_before = snapshot(g.parameters());
    for (int i = 0; i < 3; ++i) sr_train_step(g, d, toy.view(), lr, hr, LossWeights{}, go, dopt);
    EXPECT_EQ(snapshot(toy.vs.parameters()), vit_before);
    EXPECT_EQ(snapshot(toy.as.parameters()), ae_before);
    EXPECT_NE(snapshot(g.parameters()), gen_before);
}

TEST(SrTraining, HrMustBeScaleTimesLr) {
    ToyExtractors toy(18);
    GeneratorConfig c;
    c.residual_blocks = 0;
    c.base_channels = 2;
    Rng rng(19);
    Generator g = Generator::make(c, rng);
    nn::Discriminator d = nn::Discriminator::make({2, 1}, rng);
    train::OptimizerState go, dopt;
    EXPECT_THROW(sr_train_step(g, d, toy.view(), Tensor::zeros({1, 1, 8, 8}), Tensor::zeros({1, 1, 12, 12}),
                               LossWeights{}, go, dopt),
                 DimensionError);
}

TEST(SrTraining, ExtractorsAtOtherExtentsReceiveResizedInputs) {
    ToyExtractors toy(20, 32);  // extractors expect 32x32, HR is 16x16
    GeneratorConfig c;
    c.residual_blocks = 0;
    c.base_channels = 2;
    Rng rng(21);
    Generator g = Generator::make(c, rng);
    nn::Discriminator d = nn::Discriminator::make({2, 1}, rng);
    std::mt19937_64 r(22);
    const Tensor lr = rand_batch(1, 8, 8, r);
    EXPECT_NO_THROW(sr_forward(g, d, toy.view(), lr, LossWeights{}, true));
}

TEST(SrGradients, CompositeLossMatchesFiniteDifferences) {
    ToyExtractors toy(23);
    GeneratorConfig c;
    c.residual_blocks = 2;
    c.base_channels = 3;
    Rng rng(24);
    Generator g = Generator::make(c, rng);
    nn::Discriminator d = nn::Discriminator::make({2, 1}, rng);
    d.readout.weight = Tensor({4, 1}, {0.4, -0.3, 0.2, 0.6});
    std::mt19937_64 r(25);
    const Tensor lr = rand_batch(2, 8, 8, r);
    const Extractors ex = toy.view();
    auto loss = [&] { return sr_forward(g, d, ex, lr, LossWeights{}, true).total; };
    GradCheckOptions opt;
    opt.max_coords = 10;
    std::vector<Tensor> leaves{g.head.kernel, g.blocks[0].conv1.kernel, g.blocks[0].bn1.gamma, g.blocks[1].conv2.kernel,
                               g.blocks[1].bn2.beta, g.up[0].kernel, g.tail.kernel, g.tail.bias};
    EXPECT_LT(grad_check(loss, leaves, opt), 1e-3);
}

TEST(SrGradients, ResidualBlockMatchesFiniteDifferences) {
    GeneratorConfig c;
    c.residual_blocks = 1;
    c.base_channels = 3;
    Rng rng(26);
    Generator g = Generator::make(c, rng);
    ResidualBlock& b = g.blocks[0];
    std::mt19937_64 r(27);
    const Tensor x = Tensor({2, 3, 5, 5}, oracle::random_vec(150, r));
    auto loss = [&] {
        Tensor h = relu(b.bn1(b.conv1(x), true));
        return sum(square(add(x, b.bn2(b.conv2(h), true))));
    };
    std::vector<Tensor> leaves{b.conv1.kernel, b.bn1.gamma, b.bn1.beta, b.conv2.kernel, b.bn2.gamma};
    EXPECT_LT(grad_check(loss, leaves), 1e-3);
    // Batch statistics cancel a per-channel bias feeding the normalisation.
    loss().backward();
    for (double v : b.conv1.bias.grad()) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(SrGradients, ZeroWeightTermsContributeNoGradient) {
    ToyExtractors toy(28);
    GeneratorConfig c;
    c.residual_blocks = 1;
    c.base_channels = 3;
    Rng rng(29);
    Generator g = Generator::make(c, rng);
    nn::Discriminator d = nn::Discriminator::make({2, 1}, rng);
    d.readout.weight = Tensor({4, 1}, {0.4, -0.3, 0.2, 0.6});
    std::mt19937_64 r(30);
    const Tensor lr = rand_batch(2, 8, 8, r);
    ParameterList p = g.parameters();

    zero_grads(p);
    const SRGraph f = sr_forward(g, d, toy.view(), lr, LossWeights{0, 0, 0}, true);
    EXPECT_GT(f.vit.item() + f.str.item() + f.tex.item(), 0.0);  // still reported
    f.total.backward();
    const auto g0 = p[0].tensor.grad();

    zero_grads(p);
    sr_adv_loss(d(g(lr, true))).backward();
    const auto g1 = p[0].tensor.grad();
    ASSERT_EQ(g0.size(), g1.size());
    for (std::size_t i = 0; i < g0.size(); ++i) EXPECT_NEAR(g0[i], g1[i], 1e-14);
}
