#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "support/test_util.hpp"
#include "taskden/checkpoint.hpp"
#include "taskden/parameter.hpp"
#include "taskden/training.hpp"

namespace taskden {
namespace {

const LoadedDataset& small_data() {
    static const LoadedDataset data = testing::tiny_dataset(8, 2, 2);
    return data;
}

std::unique_ptr<Network> frozen_unet(std::uint64_t seed = 1) {
    auto t = build_segmenter(SegmenterKind::unet_small, seed);
    t->set_training(false);
    t->freeze();
    return t;
}

TrainConfig quick_config(LossVariant variant) {
    TrainConfig cfg;
    cfg.loss_variant = variant;
    cfg.epochs = 3;
    cfg.denoiser = {"denoiser", {8, 8, 1}, 3};
    cfg.critic = {"critic", {8, 16, 16}, 3};
    return cfg;
}

TEST(TrainConfig, DefaultHyperparameters) {
    const TrainConfig cfg;
    EXPECT_EQ(cfg.lr, 0.0005);
    EXPECT_EQ(cfg.batch_size, 4u);
    EXPECT_EQ(cfg.epochs, 50u);
    EXPECT_EQ(cfg.lambda_mse, 0.5);
    EXPECT_EQ(cfg.clamp_eps, 0.01);
    EXPECT_EQ(cfg.critic_steps_per_gen_step, 1u);
    EXPECT_EQ(cfg.fidelity_reduction, Reduction::per_image_sum);
    EXPECT_EQ(cfg.critic.channels, (std::vector<std::size_t>{32, 64, 128}));
    EXPECT_EQ(cfg.resolved_metric(), CheckpointMetric::val_dice);
    TrainConfig mse = cfg;
    mse.loss_variant = LossVariant::mse_only;
    EXPECT_EQ(mse.resolved_metric(), CheckpointMetric::val_psnr);
}

TEST(TrainConfig, ValidationRejectsNonPositive) {
    TrainConfig cfg;
    cfg.lr = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.lambda_mse = -1;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.clamp_eps = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    EXPECT_THROW(parse_variant("gan_only"), std::invalid_argument);
    EXPECT_EQ(parse_variant("mse_only"), LossVariant::mse_only);
    EXPECT_EQ(parse_metric("auto"), CheckpointMetric::automatic);
}

TEST(SelectCheckpoint, ArgmaxWithEarliestTie) {
    auto log = [](std::vector<double> m) {
        std::vector<EpochRecord> out;
        for (std::size_t i = 0; i < m.size(); ++i) out.push_back({i + 1, m[i], 0});
        return out;
    };
    EXPECT_EQ(select_checkpoint(log({0.7, 0.9, 0.8})), 2u);
    EXPECT_EQ(select_checkpoint(log({0.9, 0.9})), 1u);
    EXPECT_EQ(select_checkpoint(log({0.4})), 1u);
    EXPECT_THROW(select_checkpoint({}), std::invalid_argument);
}

TEST(HalfTrained, TwentyPercentOfEpochs) {
    EXPECT_EQ(half_trained_epoch(50), 10u);
    EXPECT_EQ(half_trained_epoch(3), 1u);
    EXPECT_EQ(half_trained_epoch(1), 1u);
    EXPECT_EQ(half_trained_epoch(12), 3u);
}

TEST(TrainDenoiser, CriticClampHoldsAfterEveryUpdate) {
    TrainConfig cfg = quick_config(LossVariant::tod);
    cfg.critic = default_critic_spec();
    auto seg = frozen_unet();
    std::size_t updates = 0;
    TrainHooks hooks;
    hooks.after_critic_update = [&](Network& d) {
        auto params = d.parameters();
        EXPECT_LE(max_abs_value(params), Real(0.01));
        ++updates;
    };
    train_denoiser(small_data(), seg.get(), cfg, {}, hooks);
    EXPECT_EQ(updates, 6u);
}

TEST(TrainDenoiser, SmokeRunLogsFiniteValues) {
    TrainConfig cfg = quick_config(LossVariant::tod);
    cfg.denoiser = default_denoiser_spec();
    cfg.critic = default_critic_spec();
    cfg.epochs = 5;
    cfg.max_steps = 10;
    auto seg = frozen_unet();
    testing::TempDir dir;
    DenoiserOutputs out{dir / "best.ckpt", dir / "last.ckpt", dir / "half.ckpt", dir / "train.csv"};
    const DenoiserResult r = train_denoiser(small_data(), seg.get(), cfg, out);
    ASSERT_EQ(r.log.steps.size(), 10u);
    for (std::size_t i = 0; i < r.log.steps.size(); ++i) {
        const StepRecord& s = r.log.steps[i];
        EXPECT_EQ(s.step, i);
        for (double v : {s.loss_d, s.loss_gan, s.loss_t, s.loss_mse, s.loss_g}) EXPECT_TRUE(std::isfinite(v));
        // float32 sum of three terms: a few ulps of the largest magnitude
        const double scale = std::max({1.0, std::abs(s.loss_gan), std::abs(s.loss_t), std::abs(s.loss_mse)});
        EXPECT_NEAR(s.loss_g, s.loss_gan + s.loss_t + 0.5 * s.loss_mse, 1e-5 * scale);
    }
    EXPECT_EQ(r.log.epochs.size(), 5u);
    for (const auto& p : {out.best, out.last, out.half}) EXPECT_TRUE(std::filesystem::exists(p)) << p;

    std::ifstream csv(out.log);
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, kTrainingLogHeader);
    std::size_t rows = 0;
    while (std::getline(csv, line)) ++rows;
    EXPECT_EQ(rows, r.log.steps.size());
    EXPECT_EQ(load_network(out.best)->checksum(), r.denoiser->checksum());
}

TEST(TrainDenoiser, MseOnlyNeverEvaluatesTaskLoss) {
    TrainConfig cfg = quick_config(LossVariant::mse_only);
    cfg.lambda_mse = 1.0;
    cfg.use_gan = false;
    const std::uint64_t before = task_loss_evaluations();
    const DenoiserResult r = train_denoiser(small_data(), nullptr, cfg);
    EXPECT_EQ(task_loss_evaluations(), before);
    for (const StepRecord& s : r.log.steps) {
        EXPECT_EQ(s.loss_t, 0.0);
        EXPECT_EQ(s.loss_gan, 0.0);
        EXPECT_EQ(s.loss_d, 0.0);
        EXPECT_DOUBLE_EQ(s.loss_g, s.loss_mse);
    }
}

TEST(TrainDenoiser, TodRequiresFrozenSegmenter) {
    TrainConfig cfg = quick_config(LossVariant::tod);
    EXPECT_THROW(train_denoiser(small_data(), nullptr, cfg), std::invalid_argument);
    auto live = build_segmenter(SegmenterKind::unet_small, 1);
    EXPECT_THROW(train_denoiser(small_data(), live.get(), cfg), std::logic_error);
}

TEST(TrainDenoiser, FrozenSegmenterAndGradientIsolation) {
    auto seg = frozen_unet(4);
    const std::string seg_sum = seg->checksum();
    Network* generator = nullptr;
    std::size_t critic_checks = 0, generator_checks = 0;
    TrainHooks hooks;
    hooks.after_critic_update = [&](Network&) {
        EXPECT_EQ(seg->checksum(), seg_sum);
        if (!generator) return;
        for (Parameter* p : generator->parameters()) EXPECT_FALSE(p->tensor.has_grad()) << p->name;
        ++critic_checks;
    };
    hooks.after_generator_update = [&](Network& g, Network& d) {
        generator = &g;
        for (Parameter* p : d.parameters()) EXPECT_FALSE(p->tensor.has_grad()) << p->name;
        for (Parameter* p : seg->parameters()) EXPECT_FALSE(p->tensor.has_grad()) << p->name;
        ++generator_checks;
    };
    train_denoiser(small_data(), seg.get(), quick_config(LossVariant::tod), {}, hooks);
    EXPECT_EQ(seg->checksum(), seg_sum);
    EXPECT_EQ(generator_checks, 6u);
    EXPECT_EQ(critic_checks, 5u);
}

TEST(TrainDenoiser, DeterministicInSeed) {
    auto seg = frozen_unet(5);
    auto run = [&](std::uint64_t seed) {
        TrainConfig cfg = quick_config(LossVariant::tod);
        cfg.seed = seed;
        return train_denoiser(small_data(), seg.get(), cfg).denoiser->checksum();
    };
    const std::string a = run(3);
    EXPECT_EQ(run(3), a);
    EXPECT_NE(run(4), a);
}

TEST(TrainDenoiser, AblationVariantsRun) {
    for (LossVariant v : {LossVariant::perceptual, LossVariant::l1}) {
        TrainConfig cfg = quick_config(v);
        cfg.epochs = 1;
        const DenoiserResult r = train_denoiser(small_data(), nullptr, cfg);
        EXPECT_EQ(r.log.steps.size(), 2u) << variant_name(v);
        EXPECT_EQ(r.best_epoch, 1u);
    }
}

TEST(TrainDenoiser, InterruptKeepsLastCompletedEpoch) {
    testing::TempDir dir;
    DenoiserOutputs out{dir / "best.ckpt", dir / "last.ckpt", dir / "half.ckpt", dir / "train.csv"};
    TrainConfig cfg = quick_config(LossVariant::mse_only);
    std::string after_epoch1;
    std::size_t steps = 0;
    TrainHooks hooks;
    hooks.after_generator_update = [&](Network&, Network&) {
        if (++steps == 3) stop_requested() = true;  // mid epoch 2
    };
    const DenoiserResult r = train_denoiser(small_data(), nullptr, cfg, out, hooks);
    stop_requested() = false;
    EXPECT_TRUE(r.interrupted);
    ASSERT_EQ(r.log.epochs.size(), 1u);
    EXPECT_EQ(r.log.steps.size(), 3u);
    auto last = load_network(out.last);
    EXPECT_EQ(last->checksum(), r.denoiser->checksum());
}

TEST(PretrainSegmenter, DeterministicAndFrozen) {
    SegTrainConfig cfg;
    cfg.epochs = 2;
    testing::TempDir dir;
    const SegmenterResult a = pretrain_segmenter(SegmenterKind::plain_cnn, small_data(), cfg, dir / "a.ckpt");
    const SegmenterResult b = pretrain_segmenter(SegmenterKind::plain_cnn, small_data(), cfg, dir / "b.ckpt");
    EXPECT_EQ(a.net->checksum(), b.net->checksum());
    EXPECT_EQ(read_file_bytes(dir / "a.ckpt"), read_file_bytes(dir / "b.ckpt"));
    EXPECT_TRUE(a.net->frozen());
    EXPECT_FALSE(a.net->training());
    EXPECT_EQ(a.epochs.size(), 2u);
    EXPECT_GE(a.test_dice_ndct, 0.0);
    EXPECT_LE(a.test_dice_ndct, 1.0);
    EXPECT_EQ(load_network(dir / "a.ckpt")->checksum(), a.net->checksum());
}

TEST(Inference, DenoiseClampsAndRestoresMode) {
    auto g = build_denoiser(1);
    g->set_training(true);
    const Case& c = small_data().test[0];
    const Image out = denoise(*g, c.ldct);
    EXPECT_TRUE(g->training());
    for (double v : out.pixels) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

}  // namespace
}  // namespace taskden
