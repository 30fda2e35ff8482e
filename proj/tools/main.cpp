#include <csignal>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "taskden/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitAcceptance = 3;

extern "C" void on_interrupt(int) {
    taskden::stop_requested() = true;
    std::signal(SIGINT, SIG_DFL);  // a second Ctrl-C kills immediately
}

}  // namespace

int main(int argc, char** argv) {
    using namespace taskden;

    CLI::App app{"Task-oriented low-dose CT denoising on synthetic phantoms"};
    app.require_subcommand(1);
    std::string config_path = "configs/default.cfg";
    app.add_option("-c,--config", config_path, "Config file")->capture_default_str();

    bool force = false;
    long seed_override = -1;
    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic NDCT/LDCT/mask dataset");
    gen->add_flag("--force", force, "Overwrite an existing dataset");
    gen->add_option("--seed", seed_override, "Override data.seed");

    std::string kind = "all";
    auto* seg = app.add_subcommand("pretrain-seg", "Pretrain segmenters on clean NDCT");
    seg->add_option("--kind", kind, "all, unet_small, plain_cnn, residual_cnn or dilated_cnn")->capture_default_str();

    std::string variant = "tod";
    std::string segmenter_path;
    auto* train = app.add_subcommand("train-denoiser", "Train a denoiser (alternating WGAN loop)");
    train->add_option("--variant", variant, "tod, mse_only, perceptual or l1")->capture_default_str();
    train->add_option("--segmenter", segmenter_path, "Frozen segmenter checkpoint used by the task loss");

    auto* eval = app.add_subcommand("evaluate", "Write quality, Dice and significance tables");

    std::string checkpoint;
    std::string case_selector = "all";
    auto* grad = app.add_subcommand("gradmaps", "Per-loss gradient maps on test cases");
    grad->add_option("--checkpoint", checkpoint, "Denoiser checkpoint (default: half-trained tod)");
    grad->add_option("--case", case_selector, "Test case id or 'all'")->capture_default_str();

    auto* repro = app.add_subcommand("reproduce", "Run every stage and the acceptance checks");
    repro->add_flag("--force", force, "Overwrite existing outputs");

    for (auto* sub : {gen, seg, train, eval, grad, repro}) {
        sub->add_option("-c,--config", config_path, "Config file")->capture_default_str();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    Config config;
    try {
        config = load_config(config_path);
        if (seed_override >= 0) config.data.seed = static_cast<std::uint64_t>(seed_override);
        if (seg->parsed() && kind != "all") parse_segmenter_kind(kind);
        if (train->parsed()) parse_variant(variant);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    std::signal(SIGINT, on_interrupt);
    try {
        if (gen->parsed()) {
            cmd_gen_data(config, force, std::cout);
        } else if (seg->parsed()) {
            std::vector<SegmenterKind> kinds = config.segmenters;
            if (kind != "all") kinds = {parse_segmenter_kind(kind)};
            cmd_pretrain_seg(config, kinds, std::cout);
        } else if (train->parsed()) {
            const DenoiserSummary s = cmd_train_denoiser(config, parse_variant(variant), segmenter_path, std::cout);
            if (s.interrupted) {
                std::cerr << "interrupted; last completed epoch checkpoint kept at "
                          << RunLayout(config).denoiser_last(s.variant).string() << "\n";
                return kExitRuntime;
            }
        } else if (eval->parsed()) {
            cmd_evaluate(config, std::cout);
        } else if (grad->parsed()) {
            const std::filesystem::path ckpt =
                checkpoint.empty() ? RunLayout(config).denoiser_half("tod") : std::filesystem::path(checkpoint);
            cmd_gradmaps(config, ckpt, case_selector, std::cout);
        } else if (repro->parsed()) {
            const AcceptanceReport report = cmd_reproduce(config, force, std::cout);
            if (!report.passed()) {
                for (const auto& c : report.checks) {
                    if (!c.passed) std::cerr << "acceptance check failed: criterion " << c.id << " (" << c.name << ")\n";
                }
                return kExitAcceptance;
            }
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
