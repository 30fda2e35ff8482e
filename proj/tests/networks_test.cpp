#include <gtest/gtest.h>

#include <regex>
#include <set>

#include "support/test_util.hpp"
#include "taskden/losses.hpp"
#include "taskden/networks.hpp"
#include "taskden/parameter.hpp"

namespace taskden {
namespace {

using testing::uniform_tensor;

std::size_t conv_params(std::size_t in, std::size_t out, std::size_t k) { return in * out * k * k + out; }

TEST(Denoiser, ParameterCountMatchesLayerArithmetic) {
    auto g = build_denoiser(1);
    const std::size_t expected = conv_params(1, 32, 3) + conv_params(32, 64, 3) + conv_params(64, 64, 3) +
                                 conv_params(64, 32, 3) + conv_params(32, 1, 3);
    EXPECT_EQ(expected, 74497u);
    EXPECT_EQ(g->parameter_count(), expected);
}

TEST(Denoiser, PreservesShape) {
    auto g = build_denoiser(2);
    NoGradGuard no_grad;
    EXPECT_EQ((*g)(Tensor({1, 1, 64, 64}, Real(0.3))).shape(), (Shape{1, 1, 64, 64}));
}

TEST(Denoiser, ZeroedLastLayerIsExactIdentity) {
    auto g = build_denoiser(3);
    auto params = g->parameters();
    for (Parameter* p : {params[params.size() - 2], params.back()}) {
        for (Real& v : p->tensor.data()) v = 0;
    }
    std::mt19937_64 rng(1);
    Tensor x = uniform_tensor(rng, {2, 1, 32, 32}, 0, 1);
    Tensor y = (*g)(x);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Denoiser, RequiresSingleChannelOutput) {
    EXPECT_THROW(build_denoiser(NetworkSpec{"denoiser", {8, 2}, 3}, 1), std::invalid_argument);
    EXPECT_THROW(build_denoiser(NetworkSpec{"denoiser", {8, 1}, 4}, 1), std::invalid_argument);
}

TEST(Critic, OutputShapeAndChannels) {
    auto d = build_discriminator(4);
    NoGradGuard no_grad;
    EXPECT_EQ((*d)(Tensor({4, 1, 64, 64}, Real(0.5))).shape(), (Shape{4, 1}));

    std::vector<std::size_t> channels;
    std::regex conv_re(R"(conv2d\((\d+)->(\d+),k3,s2,p1\))");
    for (const auto& layer : d->layers()) {
        std::smatch m;
        if (std::regex_match(layer, m, conv_re)) channels.push_back(std::stoul(m[2]));
    }
    EXPECT_EQ(channels, (std::vector<std::size_t>{32, 64, 128}));
}

TEST(Critic, UnboundedOutputStructure) {
    auto d = build_discriminator(5);
    const auto& layers = d->layers();
    ASSERT_FALSE(layers.empty());
    EXPECT_EQ(layers.back(), "dense(128->1)");
    for (const auto& l : layers) EXPECT_EQ(l.find("sigmoid"), std::string::npos);
    std::size_t norms = 0;
    for (const auto& l : layers) norms += l.rfind("batch_norm2d", 0) == 0;
    EXPECT_EQ(norms, 3u);
}

TEST(Critic, FiniteAfterClamp) {
    auto d = build_discriminator(6);
    auto params = d->parameters();
    clamp_parameters(params, Real(0.01));
    std::mt19937_64 rng(2);
    for (bool training : {true, false}) {
        d->set_training(training);
        Tensor out = (*d)(uniform_tensor(rng, {4, 1, 64, 64}, 0, 1));
        for (Real v : out.data()) EXPECT_TRUE(std::isfinite(v));
    }
}

TEST(Segmenter, ProbabilityMapsForEveryKind) {
    std::mt19937_64 rng(3);
    Tensor x = uniform_tensor(rng, {1, 1, 64, 64}, 0, 1);
    for (SegmenterKind kind : kAllSegmenters) {
        auto t = build_segmenter(kind, 7);
        // nudge the zero-initialized head so the range check is informative
        auto params = t->parameters();
        std::normal_distribution<double> n(0.0, 0.3);
        for (Real& v : params[params.size() - 2]->tensor.data()) v = static_cast<Real>(n(rng));
        t->set_training(false);
        NoGradGuard no_grad;
        Tensor y = (*t)(x);
        ASSERT_EQ(y.shape(), (Shape{1, 1, 64, 64})) << segmenter_name(kind);
        for (Real v : y.data()) {
            EXPECT_GT(v, 0) << segmenter_name(kind);
            EXPECT_LT(v, 1) << segmenter_name(kind);
        }
    }
}

TEST(Segmenter, KindsHaveDistinctParameterCounts) {
    std::set<std::size_t> counts;
    for (SegmenterKind kind : kAllSegmenters) counts.insert(build_segmenter(kind, 1)->parameter_count());
    EXPECT_EQ(counts.size(), 4u);
}

TEST(Segmenter, ConstantInputGivesConstantMapForConvOnlyNets) {
    for (SegmenterKind kind : {SegmenterKind::plain_cnn, SegmenterKind::dilated_cnn, SegmenterKind::residual_cnn}) {
        auto t = build_segmenter(kind, 9);
        auto params = t->parameters();
        for (Real& v : params[params.size() - 1]->tensor.data()) v = Real(0.3);
        t->set_training(false);
        NoGradGuard no_grad;
        // zero padding only matters near the border, so compare interior pixels
        for (Real fill : {Real(0), Real(0.5)}) {
            Tensor y = (*t)(Tensor({1, 1, 64, 64}, fill));
            const Real center = y.data()[32 * 64 + 32];
            for (std::size_t r = 16; r < 48; ++r)
                for (std::size_t c = 16; c < 48; ++c)
                    EXPECT_NEAR(y.data()[r * 64 + c], center, 1e-6) << segmenter_name(kind);
        }
    }
}

TEST(Segmenter, UnknownKindThrows) {
    EXPECT_THROW(parse_segmenter_kind("vnet"), std::invalid_argument);
    EXPECT_EQ(parse_segmenter_kind("unet_small"), SegmenterKind::unet_small);
}

TEST(Segmenter, EvalModeIsBatchIndependent) {
    auto t = build_segmenter(SegmenterKind::unet_small, 4);
    t->set_training(false);
    std::mt19937_64 rng(5);
    Tensor a = uniform_tensor(rng, {1, 1, 32, 32}, 0, 1), b = uniform_tensor(rng, {1, 1, 32, 32}, 0, 1);
    Tensor batch({2, 1, 32, 32});
    std::copy(a.data().begin(), a.data().end(), batch.data().begin());
    std::copy(b.data().begin(), b.data().end(), batch.data().begin() + 1024);
    NoGradGuard no_grad;
    Tensor single = (*t)(a), both = (*t)(batch);
    for (std::size_t i = 0; i < 1024; ++i) EXPECT_EQ(single.data()[i], both.data()[i]);
}

TEST(Perceptual, FrozenAndDeterministic) {
    auto f = build_perceptual_net(11);
    EXPECT_TRUE(f->frozen());
    EXPECT_FALSE(f->training());
    const std::string before = f->checksum();
    std::mt19937_64 rng(6);
    Tensor x = uniform_tensor(rng, {1, 1, 16, 16}, 0, 1).set_requires_grad(true);
    sum((*f)(x)).backward();
    auto params = f->parameters();
    rmsprop_step(params, {});
    EXPECT_EQ(f->checksum(), before);
    for (Parameter* p : params) EXPECT_FALSE(p->tensor.has_grad());
    EXPECT_TRUE(x.has_grad());

    auto g = build_perceptual_net(11);
    NoGradGuard no_grad;
    Tensor fa = (*f)(x.detach()), fb = (*g)(x.detach());
    for (std::size_t i = 0; i < fa.numel(); ++i) EXPECT_EQ(fa.data()[i], fb.data()[i]);
    EXPECT_EQ(perceptual_loss(*f, x.detach(), x.detach()).item(), 0.0);
}

TEST(Serialization, SaveLoadRoundTrip) {
    testing::TempDir dir;
    for (const NetworkSpec& spec : {default_denoiser_spec(), default_critic_spec(),
                                    segmenter_spec(SegmenterKind::unet_small),
                                    segmenter_spec(SegmenterKind::residual_cnn)}) {
        auto net = build_network(spec, 21);
        const auto path = dir / (spec.kind + ".ckpt");
        save_network(*net, path);
        EXPECT_TRUE(std::filesystem::exists(path.string() + ".arch"));
        auto back = load_network(path);
        EXPECT_EQ(back->spec().to_text(), spec.to_text());
        EXPECT_EQ(back->checksum(), net->checksum());
    }
}

TEST(Serialization, StrictLoadRejectsMismatch) {
    auto a = build_segmenter(SegmenterKind::plain_cnn, 1);
    auto b = build_segmenter(SegmenterKind::dilated_cnn, 1);
    auto records = b->state();
    records.pop_back();
    EXPECT_THROW(b->load_state(records), IoError);
    auto unet = build_segmenter(SegmenterKind::unet_small, 1);
    EXPECT_THROW(a->load_state(unet->state()), IoError);
}

TEST(Spec, TextRoundTripAndHash) {
    const NetworkSpec s = default_critic_spec();
    EXPECT_EQ(NetworkSpec::parse(s.to_text()).to_text(), s.to_text());
    EXPECT_EQ(s.hash().size(), 64u);
    EXPECT_NE(s.hash(), default_denoiser_spec().hash());
}

TEST(Init, DeterministicInSeed) {
    EXPECT_EQ(build_denoiser(5)->checksum(), build_denoiser(5)->checksum());
    EXPECT_NE(build_denoiser(5)->checksum(), build_denoiser(6)->checksum());
}

}  // namespace
}  // namespace taskden
