#include "taskden/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "taskden/metrics.hpp"
#include "taskden/parallel.hpp"
#include "taskden/parameter.hpp"
#include "taskden/phantom.hpp"

namespace taskden {

namespace {

constexpr std::uint64_t kShuffleStream = 20;
constexpr std::uint64_t kDenoiserInitStream = 21;
constexpr std::uint64_t kCriticInitStream = 22;
constexpr std::uint64_t kPerceptualInitStream = 23;
constexpr std::uint64_t kSegmenterInitStream = 24;

class ModeGuard {
public:
    ModeGuard(Network& net, bool training) : net_(net), previous_(net.training()) { net.set_training(training); }
    ~ModeGuard() { net_.set_training(previous_); }
    ModeGuard(const ModeGuard&) = delete;
    ModeGuard& operator=(const ModeGuard&) = delete;

private:
    Network& net_;
    bool previous_;
};

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, epoch, kShuffleStream));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

struct Batch {
    Tensor ldct, ndct, mask;
};

Batch make_batch(const std::vector<Case>& cases, std::span<const std::size_t> idx) {
    std::vector<const Image*> ldct, ndct;
    for (std::size_t i : idx) {
        ldct.push_back(&cases[i].ldct);
        ndct.push_back(&cases[i].ndct);
    }
    Batch b{stack_images(ldct), stack_images(ndct), Tensor()};
    const std::size_t hw = cases[idx[0]].mask.size();
    b.mask = Tensor(Shape{idx.size(), 1, cases[idx[0]].mask.height, cases[idx[0]].mask.width});
    auto dst = b.mask.data();
    for (std::size_t n = 0; n < idx.size(); ++n) {
        const Mask& m = cases[idx[n]].mask;
        for (std::size_t i = 0; i < hw; ++i) dst[n * hw + i] = m.values[i] ? Real(1) : Real(0);
    }
    return b;
}

void require_finite(double v, const char* what, std::size_t step) {
    if (!std::isfinite(v)) {
        throw NumericError(std::string("non-finite ") + what + " loss at step " + std::to_string(step));
    }
}

double mean_psnr(Network& denoiser, const std::vector<Case>& cases) {
    std::vector<double> values;
    for (const Case& c : cases) {
        const double p = psnr(denoise(denoiser, c.ldct), c.ndct);
        values.push_back(std::isfinite(p) ? p : 100.0);
    }
    return mean_of(values);
}

}  // namespace

Image infer(Network& net, const Image& input) {
    ModeGuard mode(net, false);
    NoGradGuard no_grad;
    return tensor_to_image(net(image_to_tensor(input)));
}

Image denoise(Network& denoiser, const Image& ldct) {
    Image out = infer(denoiser, ldct);
    for (double& v : out.pixels) v = std::clamp(v, 0.0, 1.0);
    return out;
}

Mask segment(Network& segmenter, const Image& image) { return threshold_mask(infer(segmenter, image)); }

const char* variant_name(LossVariant v) {
    switch (v) {
        case LossVariant::tod: return "tod";
        case LossVariant::mse_only: return "mse_only";
        case LossVariant::perceptual: return "perceptual";
        case LossVariant::l1: return "l1";
    }
    return "?";
}

LossVariant parse_variant(const std::string& name) {
    for (LossVariant v : {LossVariant::tod, LossVariant::mse_only, LossVariant::perceptual, LossVariant::l1}) {
        if (name == variant_name(v)) return v;
    }
    throw std::invalid_argument("unknown loss variant '" + name + "' (expected tod, mse_only, perceptual or l1)");
}

const char* metric_name(CheckpointMetric m) {
    switch (m) {
        case CheckpointMetric::automatic: return "auto";
        case CheckpointMetric::val_dice: return "val_dice";
        case CheckpointMetric::val_psnr: return "val_psnr";
    }
    return "?";
}

CheckpointMetric parse_metric(const std::string& name) {
    for (CheckpointMetric m : {CheckpointMetric::automatic, CheckpointMetric::val_dice, CheckpointMetric::val_psnr}) {
        if (name == metric_name(m)) return m;
    }
    throw std::invalid_argument("unknown checkpoint metric '" + name + "' (expected auto, val_dice or val_psnr)");
}

void TrainConfig::validate() const {
    if (!(lr > 0)) throw std::invalid_argument("lr must be positive");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (epochs == 0) throw std::invalid_argument("epochs must be positive");
    if (!(lambda_mse >= 0)) throw std::invalid_argument("lambda_mse must be >= 0");
    if (!(clamp_eps > 0)) throw std::invalid_argument("clamp_eps must be positive");
    if (critic_steps_per_gen_step == 0) throw std::invalid_argument("critic_steps_per_gen_step must be positive");
}

CheckpointMetric TrainConfig::resolved_metric() const {
    if (checkpoint_metric != CheckpointMetric::automatic) return checkpoint_metric;
    return loss_variant == LossVariant::tod ? CheckpointMetric::val_dice : CheckpointMetric::val_psnr;
}

void SegTrainConfig::validate() const {
    if (!(lr > 0)) throw std::invalid_argument("segmenter lr must be positive");
    if (batch_size == 0) throw std::invalid_argument("segmenter batch_size must be positive");
    if (epochs == 0) throw std::invalid_argument("segmenter epochs must be positive");
}

std::size_t half_trained_epoch(std::size_t epochs) {
    return std::max<std::size_t>(1, (epochs + 4) / 5);
}

TrainingLogWriter::TrainingLogWriter(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::trunc);
    if (!out_) throw IoError("cannot write training log " + path.string());
    out_ << kTrainingLogHeader << '\n' << std::flush;
}

void TrainingLogWriter::append(const StepRecord& r) {
    out_.precision(9);
    out_ << r.step << ',' << r.epoch << ',' << r.loss_d << ',' << r.loss_gan << ',' << r.loss_t << ',' << r.loss_mse
         << ',' << r.loss_g << '\n'
         << std::flush;
}

std::size_t select_checkpoint(const std::vector<EpochRecord>& epochs) {
    if (epochs.empty()) throw std::invalid_argument("select_checkpoint: no completed epochs");
    std::size_t best = 0;
    for (std::size_t i = 1; i < epochs.size(); ++i) {
        if (epochs[i].metric > epochs[best].metric) best = i;
    }
    return epochs[best].epoch;
}

std::atomic<bool>& stop_requested() {
    static std::atomic<bool> flag{false};
    return flag;
}

double mean_dice(Network& segmenter, const std::vector<Case>& cases, Network* denoiser, bool use_ldct) {
    std::vector<double> values;
    values.reserve(cases.size());
    for (const Case& c : cases) {
        const Image input = !use_ldct ? c.ndct : denoiser ? denoise(*denoiser, c.ldct) : c.ldct;
        values.push_back(hard_dice(segment(segmenter, input), c.mask));
    }
    return mean_of(values);
}

SegmenterResult pretrain_segmenter(SegmenterKind kind, const LoadedDataset& data, const SegTrainConfig& config,
                                   const std::filesystem::path& checkpoint) {
    config.validate();
    flush_denormals();
    if (data.train.empty() || data.val.empty()) throw std::invalid_argument("pretrain_segmenter: empty train or val split");
    auto net = build_segmenter(kind, derive_seed(config.seed, static_cast<std::uint64_t>(kind), kSegmenterInitStream));
    auto params = net->parameters();
    const RmspropOptions opts{static_cast<Real>(config.lr)};

    SegmenterResult result;
    std::vector<NamedTensor> best_state;
    double best_metric = -1.0;
    std::size_t step = 0;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        net->set_training(true);
        const auto order = epoch_order(data.train.size(), config.seed, epoch);
        for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
            if (stop_requested() || (config.max_steps && step >= config.max_steps)) break;
            const std::size_t last = std::min(order.size(), first + config.batch_size);
            const Batch batch = make_batch(data.train, std::span(order).subspan(first, last - first));
            LossValue loss = soft_dice_loss((*net)(batch.ndct), batch.mask);
            require_finite(loss.item(), "segmentation", step);
            loss.value.backward();
            rmsprop_step(params, opts);
            ++step;
        }
        const double val = mean_dice(*net, data.val, nullptr, false);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.epochs.push_back({epoch, val, wall});
        if (val > best_metric) {
            best_metric = val;
            best_state = net->state();
            result.best_epoch = epoch;
            if (!checkpoint.empty()) save_network(*net, checkpoint);
        }
        if (stop_requested() || (config.max_steps && step >= config.max_steps)) break;
    }
    net->load_state(best_state);
    net->set_training(false);
    net->freeze();
    result.test_dice_ndct = mean_dice(*net, data.test, nullptr, false);
    result.test_dice_ldct = mean_dice(*net, data.test, nullptr, true);
    result.net = std::move(net);
    return result;
}

DenoiserResult train_denoiser(const LoadedDataset& data, Network* segmenter, const TrainConfig& config,
                              const DenoiserOutputs& outputs, const TrainHooks& hooks) {
    config.validate();
    flush_denormals();
    const CheckpointMetric metric = config.resolved_metric();
    const bool needs_task = config.loss_variant == LossVariant::tod;
    if ((needs_task || metric == CheckpointMetric::val_dice) && !segmenter) {
        throw std::invalid_argument("train_denoiser: variant/metric requires a pretrained segmenter");
    }
    if (segmenter && !segmenter->frozen()) throw std::logic_error("train_denoiser: segmenter must be frozen");
    if (data.train.empty() || data.val.empty()) throw std::invalid_argument("train_denoiser: empty train or val split");
    if (segmenter) segmenter->set_training(false);

    auto generator = build_denoiser(config.denoiser, derive_seed(config.seed, 0, kDenoiserInitStream));
    auto critic = build_discriminator(config.critic, derive_seed(config.seed, 0, kCriticInitStream));
    std::unique_ptr<Network> features;
    if (config.loss_variant == LossVariant::perceptual) {
        features = build_perceptual_net(derive_seed(config.seed, 0, kPerceptualInitStream));
    }
    auto g_params = generator->parameters();
    auto d_params = critic->parameters();
    const RmspropOptions opts{static_cast<Real>(config.lr)};
    const Real lambda = static_cast<Real>(config.lambda_mse);
    const Real eps = static_cast<Real>(config.clamp_eps);
    if (config.use_gan) clamp_parameters(d_params, eps);

    std::optional<TrainingLogWriter> writer;
    if (!outputs.log.empty()) writer.emplace(outputs.log);

    DenoiserResult result;
    std::vector<NamedTensor> best_state;
    double best_metric = -std::numeric_limits<double>::infinity();
    const std::size_t half_epoch = half_trained_epoch(config.epochs);
    std::size_t step = 0;
    const auto start = std::chrono::steady_clock::now();
    auto finished = [&] { return stop_requested() || (config.max_steps && step >= config.max_steps); };

    for (std::size_t epoch = 1; epoch <= config.epochs && !finished(); ++epoch) {
        generator->set_training(true);
        critic->set_training(true);
        const auto order = epoch_order(data.train.size(), config.seed, epoch);
        bool epoch_complete = true;
        for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
            if (finished()) {
                epoch_complete = false;
                break;
            }
            const std::size_t last = std::min(order.size(), first + config.batch_size);
            const Batch batch = make_batch(data.train, std::span(order).subspan(first, last - first));
            StepRecord rec;
            rec.step = step;
            rec.epoch = epoch;

            if (config.use_gan) {
                for (std::size_t k = 0; k < config.critic_steps_per_gen_step; ++k) {
                    Tensor fake;
                    {
                        NoGradGuard no_grad;
                        fake = (*generator)(batch.ldct);
                    }
                    LossValue ld = critic_loss(*critic, batch.ndct, fake);
                    rec.loss_d = ld.item();
                    require_finite(rec.loss_d, "critic", step);
                    ld.value.backward();
                    rmsprop_step(d_params, opts);
                    clamp_parameters(d_params, eps);
                    if (hooks.after_critic_update) hooks.after_critic_update(*critic);
                }
            }

            Tensor fake = (*generator)(batch.ldct);
            const Reduction reduction = config.fidelity_reduction;
            LossValue mse = mse_loss(fake, batch.ndct, reduction);
            LossValue gan{Tensor::scalar(0), LossName::gan};
            if (config.use_gan) gan = generator_gan_loss(*critic, fake);
            LossValue task{Tensor::scalar(0), LossName::task};
            LossValue fidelity = mse;
            switch (config.loss_variant) {
                case LossVariant::tod: task = task_oriented_loss(*segmenter, fake, batch.mask); break;
                case LossVariant::mse_only: break;
                case LossVariant::perceptual: fidelity = perceptual_loss(*features, fake, batch.ndct, reduction); break;
                case LossVariant::l1: fidelity = l1_loss(fake, batch.ndct, reduction); break;
            }
            LossValue total = generator_total_loss(gan, task, fidelity, lambda);
            rec.loss_gan = gan.item();
            rec.loss_t = task.item();
            rec.loss_mse = mse.item();
            rec.loss_g = total.item();
            require_finite(rec.loss_g, "generator", step);
            require_finite(rec.loss_mse, "mse", step);
            total.value.backward();
            rmsprop_step(g_params, opts);
            if (hooks.after_generator_update) hooks.after_generator_update(*generator, *critic);

            result.log.steps.push_back(rec);
            if (writer) writer->append(rec);
            ++step;
        }
        // An interrupted epoch is not validated or checkpointed; a step
        // budget ending mid-epoch still closes it normally.
        if (!epoch_complete && stop_requested()) {
            result.interrupted = true;
            break;
        }

        const double value = metric == CheckpointMetric::val_dice ? mean_dice(*segmenter, data.val, generator.get())
                                                                   : mean_psnr(*generator, data.val);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.log.epochs.push_back({epoch, value, wall});
        if (!outputs.last.empty()) save_network(*generator, outputs.last);
        if (epoch == half_epoch && !outputs.half.empty()) save_network(*generator, outputs.half);
        if (value > best_metric) {
            best_metric = value;
            best_state = generator->state();
            if (!outputs.best.empty()) save_network(*generator, outputs.best);
        }
    }
    if (stop_requested()) result.interrupted = true;

    if (!result.log.epochs.empty()) {
        result.best_epoch = select_checkpoint(result.log.epochs);
        generator->load_state(best_state);
    }
    generator->set_training(false);
    critic->set_training(false);
    result.denoiser = std::move(generator);
    result.critic = std::move(critic);
    return result;
}

}  // namespace taskden
