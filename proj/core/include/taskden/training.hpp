#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "taskden/dataset.hpp"
#include "taskden/losses.hpp"
#include "taskden/networks.hpp"

namespace taskden {

// --- inference helpers -----------------------------------------------------

/// Runs `net` on one image in eval mode without recording a graph; the
/// network's previous mode is restored afterwards.
Image infer(Network& net, const Image& input);

/// Denoiser output clamped to [0, 1] (the clamp is applied only here, never
/// during training).
Image denoise(Network& denoiser, const Image& ldct);

/// Hard mask predicted by a segmenter (probability >= 0.5).
Mask segment(Network& segmenter, const Image& image);

// --- configuration ---------------------------------------------------------

enum class LossVariant { tod, mse_only, perceptual, l1 };
const char* variant_name(LossVariant v);
LossVariant parse_variant(const std::string& name);

enum class CheckpointMetric { automatic, val_dice, val_psnr };
const char* metric_name(CheckpointMetric m);
CheckpointMetric parse_metric(const std::string& name);

struct TrainConfig {
    double lr = 5e-4;
    std::size_t batch_size = 4;
    std::size_t epochs = 50;
    double lambda_mse = 0.5;
    double clamp_eps = 0.01;
    std::size_t critic_steps_per_gen_step = 1;
    std::uint64_t seed = 1;
    LossVariant loss_variant = LossVariant::tod;
    /// automatic: val_dice for tod, val_psnr otherwise.
    CheckpointMetric checkpoint_metric = CheckpointMetric::automatic;
    /// false drops the adversarial term and the critic entirely.
    bool use_gan = true;
    /// Reduction of the fidelity term (mse, l1 or perceptual) in the
    /// generator objective and in the logged loss_mse.
    Reduction fidelity_reduction = Reduction::per_image_sum;
    /// Stop after this many generator steps (0 = run all epochs).
    std::size_t max_steps = 0;
    NetworkSpec denoiser = default_denoiser_spec();
    NetworkSpec critic = default_critic_spec();

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    CheckpointMetric resolved_metric() const;
};

struct SegTrainConfig {
    double lr = 3e-4;
    std::size_t batch_size = 4;
    std::size_t epochs = 50;
    std::uint64_t seed = 1;
    std::size_t max_steps = 0;

    void validate() const;
};

/// Epoch at which the mid-training denoiser snapshot is taken: ceil(0.2 * epochs).
std::size_t half_trained_epoch(std::size_t epochs);

// --- logs ------------------------------------------------------------------

struct StepRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double loss_d = 0, loss_gan = 0, loss_t = 0, loss_mse = 0, loss_g = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double metric = 0.0;
    double wall_seconds = 0.0;
};

struct TrainingLog {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
};

inline constexpr const char* kTrainingLogHeader = "step,epoch,loss_d,loss_gan,loss_t,loss_mse,loss_g";

/// Appends one CSV row per step, flushed immediately.
class TrainingLogWriter {
public:
    explicit TrainingLogWriter(const std::filesystem::path& path);
    void append(const StepRecord& r);

private:
    std::ofstream out_;
};

/// Argmax over epochs of the validation metric, ties to the earliest epoch.
/// Returns the 1-based epoch. Throws std::invalid_argument on an empty log.
std::size_t select_checkpoint(const std::vector<EpochRecord>& epochs);

// --- training --------------------------------------------------------------

/// Set from a signal handler to end training at the next step boundary.
std::atomic<bool>& stop_requested();

struct SegmenterResult {
    std::unique_ptr<Network> net;  // best validation epoch
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double test_dice_ndct = 0.0;
    double test_dice_ldct = 0.0;
};

/// Soft-Dice training on clean NDCT; keeps the epoch with the best mean
/// validation hard Dice. Writes `checkpoint` (if non-empty) after every
/// improvement.
SegmenterResult pretrain_segmenter(SegmenterKind kind, const LoadedDataset& data, const SegTrainConfig& config,
                                   const std::filesystem::path& checkpoint = {});

/// Output locations for train_denoiser; empty paths are skipped.
struct DenoiserOutputs {
    std::filesystem::path best;  // checkpoint of the selected epoch
    std::filesystem::path last;  // rewritten at the end of every epoch
    std::filesystem::path half;  // snapshot at half_trained_epoch()
    std::filesystem::path log;   // per-step CSV
};

/// Observation points inside the loop (tests, diagnostics).
struct TrainHooks {
    std::function<void(Network& critic)> after_critic_update;
    std::function<void(Network& generator, Network& critic)> after_generator_update;
};

struct DenoiserResult {
    std::unique_ptr<Network> denoiser;  // best epoch
    std::unique_ptr<Network> critic;    // final state
    TrainingLog log;
    std::size_t best_epoch = 0;
    bool interrupted = false;
};

/// Alternating WGAN loop. Each step: critic_steps_per_gen_step critic
/// updates on (NDCT, detached G(LDCT)) followed by RMSprop and weight
/// clipping, then one generator update on the variant's objective:
///   tod:        gan + L_t + lambda * mse
///   mse_only:   gan + lambda * mse
///   perceptual: gan + lambda * L_p
///   l1:         gan + lambda * L_1
/// `segmenter` must be frozen and is required for tod and for the val_dice
/// metric. Throws NumericError on a non-finite loss; files already written
/// are left as they were.
DenoiserResult train_denoiser(const LoadedDataset& data, Network* segmenter, const TrainConfig& config,
                              const DenoiserOutputs& outputs = {}, const TrainHooks& hooks = {});

/// Mean hard Dice of `segmenter` on the given cases, optionally after denoising.
double mean_dice(Network& segmenter, const std::vector<Case>& cases, Network* denoiser = nullptr,
                 bool use_ldct = true);

}  // namespace taskden
