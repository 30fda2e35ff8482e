#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "taskden/config.hpp"
#include "taskden/evaluation.hpp"

namespace taskden {

/// File locations of every stage output under Config::run_dir.
struct RunLayout {
    std::filesystem::path root;

    explicit RunLayout(const Config& config) : root(config.run_dir) {}
    std::filesystem::path segmenter(SegmenterKind kind) const;
    std::filesystem::path segmenter_log(SegmenterKind kind) const;
    std::filesystem::path segmenter_summary() const { return root / "segmenters" / "summary.csv"; }
    std::filesystem::path denoiser(const std::string& variant) const;
    std::filesystem::path denoiser_last(const std::string& variant) const;
    std::filesystem::path denoiser_half(const std::string& variant) const;
    std::filesystem::path train_log(const std::string& variant) const;
    std::filesystem::path epoch_log(const std::string& variant) const;
    std::filesystem::path eval_dir() const { return root / "eval"; }
    std::filesystem::path gradmap_dir() const { return root / "gradmaps"; }
    std::filesystem::path manifest() const { return root / "run_manifest.json"; }
    std::filesystem::path acceptance() const { return root / "acceptance.txt"; }
};

struct SegmenterSummary {
    SegmenterKind kind;
    std::size_t best_epoch = 0;
    double ndct_test_dice = 0;
    double ldct_test_dice = 0;
    std::filesystem::path checkpoint;
};

struct DenoiserSummary {
    std::string variant;
    std::size_t best_epoch = 0;
    std::size_t steps = 0;
    bool interrupted = false;
    std::filesystem::path checkpoint;
};

struct EvaluationSummary {
    std::vector<std::string> variants;  // evaluated, in config order
    std::vector<QualityRow> quality;
    std::vector<DiceRow> dice;
    std::vector<SignificanceRow> significance;
    std::map<std::string, double> ndct_dice;  // per segmenter, clean input
    std::vector<std::filesystem::path> outputs;
};

struct GradmapSummary {
    std::vector<RoiMassRow> rows;
    std::vector<std::filesystem::path> outputs;
};

struct AcceptanceCheck {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
};

struct AcceptanceReport {
    std::vector<AcceptanceCheck> checks;
    bool passed() const;
};

DatasetSplit cmd_gen_data(const Config& config, bool force, std::ostream& log);

/// Requires the dataset manifest. Prints "<kind> ndct_test_dice=<v>" and
/// "<kind> ldct_test_dice=<v>" for every kind.
std::vector<SegmenterSummary> cmd_pretrain_seg(const Config& config, const std::vector<SegmenterKind>& kinds,
                                               std::ostream& log);

/// `segmenter_checkpoint` empty selects the representative segmenter of the
/// run layout; it is required (must exist) for the tod variant.
DenoiserSummary cmd_train_denoiser(const Config& config, LossVariant variant,
                                   const std::filesystem::path& segmenter_checkpoint, std::ostream& log);

/// Evaluates every configured variant whose checkpoint exists (warning about
/// the others) with every configured segmenter; writes quality.csv,
/// quality_summary.csv, dice.csv and significance.csv.
EvaluationSummary cmd_evaluate(const Config& config, std::ostream& log);

/// `case_selector` is "all" (every test case, or the first
/// Config::gradmap_cases of them) or one case id.
GradmapSummary cmd_gradmaps(const Config& config, const std::filesystem::path& checkpoint,
                            const std::string& case_selector, std::ostream& log);

/// Directional checks on a finished run (noise degradation, downstream
/// gain, ROI quality, gradient concentration).
AcceptanceReport check_run(const Config& config, const EvaluationSummary& eval, const GradmapSummary& grad);

/// gen-data -> pretrain-seg -> train tod and mse_only -> evaluate ->
/// gradmaps on the half-trained tod checkpoint; writes run_manifest.json
/// and acceptance.txt.
AcceptanceReport cmd_reproduce(const Config& config, bool force, std::ostream& log);

}  // namespace taskden
