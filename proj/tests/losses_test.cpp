#include <gtest/gtest.h>

#include "support/test_util.hpp"
#include "taskden/losses.hpp"
#include "taskden/networks.hpp"
#include "taskden/parameter.hpp"

namespace taskden {
namespace {

using testing::uniform_tensor;

// Scores each image by its mean pixel value; a differentiable stand-in with
// hand-computable outputs.
class MeanCritic final : public Network {
public:
    MeanCritic() : Network(NetworkSpec{"critic", {}, 3}) {}
    Tensor forward(const Tensor& x) override { return reshape(global_avg_pool2d(x), {x.dim(0), 1}); }
};

class IdentityFeatures final : public Network {
public:
    IdentityFeatures() : Network(NetworkSpec{"perceptual", {}, 3}) { freeze(); }
    Tensor forward(const Tensor& x) override { return x; }
};

Tensor images(std::vector<Real> fills, std::size_t size = 4) {
    Tensor t({fills.size(), 1, size, size});
    for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = fills[i / (size * size)];
    return t;
}

Tensor flat(std::vector<Real> v) {
    const std::size_t n = v.size();
    return Tensor({1, 1, 1, n}, std::move(v));
}

std::unique_ptr<Network> frozen_segmenter(SegmenterKind kind, std::uint64_t seed) {
    auto t = build_segmenter(kind, seed);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.3);
    auto params = t->parameters();
    for (Real& v : params[params.size() - 2]->tensor.data()) v = static_cast<Real>(n(rng));
    t->set_training(false);
    t->freeze();
    return t;
}

TEST(CriticLoss, ConstantCriticGivesZero) {
    auto d = build_discriminator(1);
    auto params = d->parameters();
    for (Real& v : params[params.size() - 2]->tensor.data()) v = 0;
    params.back()->tensor.data()[0] = Real(0.37);
    d->set_training(false);
    std::mt19937_64 rng(1);
    EXPECT_EQ(critic_loss(*d, uniform_tensor(rng, {2, 1, 16, 16}, 0, 1), uniform_tensor(rng, {2, 1, 16, 16}, 0, 1))
                  .item(),
              0.0);
}

TEST(CriticLoss, DirectEvaluation) {
    MeanCritic d;
    const LossValue l = critic_loss(d, images({1, 1}), images({0, 0}));
    EXPECT_EQ(l.name, LossName::critic);
    EXPECT_DOUBLE_EQ(l.item(), -1.0);
}

TEST(GanLoss, DirectEvaluationAndZeroCritic) {
    MeanCritic d;
    EXPECT_DOUBLE_EQ(generator_gan_loss(d, images({2, 4})).item(), -3.0);

    auto zero = build_discriminator(2);
    for (Parameter* p : zero->parameters()) {
        for (Real& v : p->tensor.data()) v = 0;
    }
    Tensor fake = images({0.3f, 0.6f}, 16).set_requires_grad(true);
    LossValue l = generator_gan_loss(*zero, fake);
    EXPECT_EQ(l.item(), 0.0);
    l.value.backward();
    for (Real g : fake.grad()) EXPECT_EQ(g, 0);
}

TEST(GanLoss, CriticReceivesNoGradient) {
    auto d = build_discriminator(3);
    std::mt19937_64 rng(3);
    Tensor fake = uniform_tensor(rng, {2, 1, 16, 16}, 0, 1).set_requires_grad(true);
    generator_gan_loss(*d, fake).value.backward();
    for (Parameter* p : d->parameters()) {
        EXPECT_FALSE(p->tensor.has_grad()) << p->name;
        EXPECT_TRUE(p->tensor.requires_grad()) << "restored after the call";
    }
    EXPECT_TRUE(fake.has_grad());
}

TEST(GanLoss, GeneratorStepRaisesCriticScore) {
    auto g = build_denoiser(NetworkSpec{"denoiser", {4, 1}, 3}, 4);
    auto d = build_discriminator(NetworkSpec{"critic", {4, 4, 4}, 3}, 5);
    d->set_training(false);
    std::mt19937_64 rng(4);
    Tensor x = uniform_tensor(rng, {4, 1, 16, 16}, 0, 1);
    auto score = [&] {
        NoGradGuard no_grad;
        return mean((*d)((*g)(x))).item();
    };
    const double before = score();
    generator_gan_loss(*d, (*g)(x)).value.backward();
    auto params = g->parameters();
    rmsprop_step(params, {Real(1e-5), Real(0.99), Real(1e-8)});
    EXPECT_GE(score(), before);
}

TEST(MseLoss, Values) {
    EXPECT_DOUBLE_EQ(mse_loss(flat({1, 0}), flat({0, 0})).item(), 0.25);
    EXPECT_EQ(mse_loss(flat({0.3f, 0.4f}), flat({0.3f, 0.4f})).item(), 0.0);
    EXPECT_THROW(mse_loss(flat({1}), flat({1, 2})), ShapeError);
}

TEST(MseLoss, GradientIsDifferenceOverN) {
    Tensor a = flat({1, -2, 0.5f}).set_requires_grad(true);
    Tensor b = flat({0, 1, 0.5f});
    mse_loss(a, b).value.backward();
    for (std::size_t i = 0; i < 3; ++i) EXPECT_FLOAT_EQ(a.grad()[i], (a.data()[i] - b.data()[i]) / 3);
}

TEST(L1Loss, ValuesAndSignGradient) {
    EXPECT_DOUBLE_EQ(l1_loss(flat({2, -1}), flat({0, 0})).item(), 1.5);
    EXPECT_EQ(l1_loss(flat({2, -1}), flat({2, -1})).item(), 0.0);
    Tensor a = flat({2, -1, 0.25f, 3}).set_requires_grad(true);
    l1_loss(a, flat({0, 0, 1, 3})).value.backward();
    EXPECT_FLOAT_EQ(a.grad()[0], 0.25f);
    EXPECT_FLOAT_EQ(a.grad()[1], -0.25f);
    EXPECT_FLOAT_EQ(a.grad()[2], -0.25f);
    EXPECT_EQ(a.grad()[3], 0);
}

TEST(FidelityReduction, PerImageSumClosedForms) {
    // two samples of two pixels: differences (1, 0) and (0, 2)
    Tensor a({2, 1, 1, 2}, {1, 0, 0, 2});
    Tensor zero = Tensor::zeros({2, 1, 1, 2});
    EXPECT_DOUBLE_EQ(mse_loss(a, zero, Reduction::per_image_sum).item(), (0.5 * 1 + 0.5 * 4) / 2);
    EXPECT_DOUBLE_EQ(l1_loss(a, zero, Reduction::per_image_sum).item(), (1.0 + 2.0) / 2);
    EXPECT_DOUBLE_EQ(mse_loss(a, zero, Reduction::mean).item(), 0.5 * 5 / 4);
    EXPECT_EQ(mse_loss(a, a, Reduction::per_image_sum).item(), 0.0);
}

TEST(FidelityReduction, PerImageSumIsMeanTimesPixelsPerImage) {
    std::mt19937_64 rng(12);
    Tensor a = uniform_tensor(rng, {3, 1, 6, 5}), b = uniform_tensor(rng, {3, 1, 6, 5});
    EXPECT_NEAR(mse_loss(a, b, Reduction::per_image_sum).item(), 30 * mse_loss(a, b).item(), 1e-4);
    EXPECT_NEAR(l1_loss(a, b, Reduction::per_image_sum).item(), 30 * l1_loss(a, b).item(), 1e-4);
}

TEST(FidelityReduction, GradientIsDifferenceOverBatch) {
    Tensor a = Tensor({2, 1, 1, 2}, {1, -2, 0.5f, 3}).set_requires_grad(true);
    Tensor b({2, 1, 1, 2}, {0, 1, 0.5f, 1});
    mse_loss(a, b, Reduction::per_image_sum).value.backward();
    for (std::size_t i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(a.grad()[i], (a.data()[i] - b.data()[i]) / 2);
}

TEST(FidelityReduction, NamesRoundTrip) {
    for (Reduction r : {Reduction::mean, Reduction::per_image_sum}) EXPECT_EQ(parse_reduction(reduction_name(r)), r);
    EXPECT_THROW(parse_reduction("sum"), std::invalid_argument);
}

TEST(SoftDice, ClosedForms) {
    Tensor mask = flat({1, 1, 0, 0});
    EXPECT_NEAR(soft_dice_loss(mask, mask).item(), 0.0, 1e-5);
    EXPECT_NEAR(soft_dice_loss(flat({0, 0, 1, 1}), mask).item(), 1.0, 1e-5);
    const double s = kDiceSmoothing;
    EXPECT_NEAR(soft_dice_loss(flat({0.5f, 0.5f, 0.5f, 0.5f}), mask).item(), 1.0 - (2.0 + s) / (4.0 + s), 1e-6);
    EXPECT_THROW(soft_dice_loss(flat({0.5f}), mask), ShapeError);
}

TEST(SoftDice, StaysInRange) {
    std::mt19937_64 rng(5);
    std::bernoulli_distribution coin(0.3);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor p = uniform_tensor(rng, {2, 1, 6, 6}, 0, 1), m({2, 1, 6, 6});
        for (Real& v : m.data()) v = coin(rng);
        const double l = soft_dice_loss(p, m).item();
        EXPECT_GE(l, 0.0);
        EXPECT_LT(l, 1.0 + kDiceSmoothing);
    }
}

TEST(TaskLoss, RequiresFrozenSegmenter) {
    auto t = build_segmenter(SegmenterKind::plain_cnn, 1);
    Tensor x({1, 1, 16, 16}, Real(0.5)), m({1, 1, 16, 16}, Real(1));
    EXPECT_THROW(task_oriented_loss(*t, x, m), std::logic_error);
}

TEST(TaskLoss, SegmenterUntouchedAfterBackwardAndStep) {
    auto t = frozen_segmenter(SegmenterKind::unet_small, 2);
    const std::string before = t->checksum();
    const std::uint64_t calls = task_loss_evaluations();
    std::mt19937_64 rng(6);
    Tensor x = uniform_tensor(rng, {2, 1, 16, 16}, 0, 1).set_requires_grad(true);
    Tensor m({2, 1, 16, 16});
    for (std::size_t i = 0; i < m.numel(); i += 3) m.data()[i] = 1;
    LossValue l = task_oriented_loss(*t, x, m);
    EXPECT_EQ(l.name, LossName::task);
    EXPECT_EQ(task_loss_evaluations(), calls + 1);
    l.value.backward();
    auto params = t->parameters();
    rmsprop_step(params, {});
    EXPECT_EQ(t->checksum(), before);
    EXPECT_TRUE(x.has_grad());
}

TEST(TaskLoss, InputIgnoringSegmenterGivesZeroGradient) {
    auto t = build_segmenter(SegmenterKind::plain_cnn, 3);
    auto params = t->parameters();
    for (Parameter* p : params) {
        for (Real& v : p->tensor.data()) v = 0;
    }
    params.back()->tensor.data()[0] = Real(0.8);
    t->freeze();
    Tensor x = images({0.2f, 0.9f}, 16).set_requires_grad(true);
    task_oriented_loss(*t, x, images({1, 0}, 16)).value.backward();
    for (Real g : x.grad()) EXPECT_EQ(g, 0);
}

TEST(PerceptualLoss, IdentityFeaturesReduceToMse) {
    IdentityFeatures f;
    std::mt19937_64 rng(7);
    Tensor a = uniform_tensor(rng, {2, 1, 5, 5}), b = uniform_tensor(rng, {2, 1, 5, 5});
    const LossValue p = perceptual_loss(f, a, b);
    EXPECT_EQ(p.name, LossName::perceptual);
    EXPECT_EQ(p.item(), mse_loss(a, b).item());
    EXPECT_EQ(perceptual_loss(f, a, a).item(), 0.0);
    EXPECT_EQ(perceptual_loss(f, a, b, Reduction::per_image_sum).item(),
              mse_loss(a, b, Reduction::per_image_sum).item());
    auto unfrozen = build_segmenter(SegmenterKind::plain_cnn, 1);
    EXPECT_THROW(perceptual_loss(*unfrozen, a, b), std::logic_error);
}

TEST(TotalLoss, CombinesWithLambda) {
    auto s = [](Real v, LossName n) { return LossValue{Tensor::scalar(v), n}; };
    const LossValue total = generator_total_loss(s(-1, LossName::gan), s(0.4f, LossName::task),
                                                 s(0.2f, LossName::mse), Real(0.5));
    EXPECT_EQ(total.name, LossName::total_g);
    EXPECT_NEAR(total.item(), -0.5, 1e-7);
    EXPECT_EQ(generator_total_loss(s(0, LossName::gan), s(0, LossName::task), s(0, LossName::mse), Real(0.5)).item(),
              0.0);
}

TEST(TotalLoss, LinearInEachComponent) {
    auto s = [](Real v, LossName n) { return LossValue{Tensor::scalar(v), n}; };
    const double base = generator_total_loss(s(0.5f, LossName::gan), s(0.25f, LossName::task),
                                             s(0.75f, LossName::mse), Real(0.5)).item();
    const double doubled_task = generator_total_loss(s(0.5f, LossName::gan), s(0.5f, LossName::task),
                                                     s(0.75f, LossName::mse), Real(0.5)).item();
    const double doubled_mse = generator_total_loss(s(0.5f, LossName::gan), s(0.25f, LossName::task),
                                                    s(1.5f, LossName::mse), Real(0.5)).item();
    EXPECT_NEAR(doubled_task - base, 0.25, 1e-7);
    EXPECT_NEAR(doubled_mse - base, 0.5 * 0.75, 1e-7);
}

TEST(LossProperties, NonNegativityAndSymmetry) {
    std::mt19937_64 rng(8);
    IdentityFeatures f;
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = uniform_tensor(rng, {1, 1, 4, 4}), b = uniform_tensor(rng, {1, 1, 4, 4});
        EXPECT_GE(mse_loss(a, b).item(), 0.0);
        EXPECT_GE(l1_loss(a, b).item(), 0.0);
        EXPECT_GE(perceptual_loss(f, a, b).item(), 0.0);
        EXPECT_EQ(mse_loss(a, b).item(), mse_loss(b, a).item());
        EXPECT_EQ(l1_loss(a, b).item(), l1_loss(b, a).item());
    }
}

TEST(LossNames, Strings) {
    EXPECT_STREQ(loss_name(LossName::task), "task");
    EXPECT_STREQ(loss_name(LossName::total_g), "total_g");
}

}  // namespace
}  // namespace taskden
