#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "taskden/dataset.hpp"
#include "taskden/losses.hpp"
#include "taskden/networks.hpp"

namespace taskden {

/// A denoiser under evaluation; `denoiser == nullptr` is the "none" variant
/// (the LDCT image is used as is).
struct VariantModel {
    std::string name;
    Network* denoiser = nullptr;
};

struct SegmenterModel {
    SegmenterKind kind;
    Network* net = nullptr;
};

struct QualityRow {
    std::string case_id;
    std::string variant;
    std::string region;  // roi | whole
    double ssim = 0, rmse = 0, psnr = 0;
};

struct QualitySummaryRow {
    std::string variant;
    std::string region;
    double ssim = 0, rmse = 0, psnr = 0;  // means over cases; infinite PSNRs are skipped
};

struct DiceRow {
    std::string case_id;
    std::string variant;
    std::string segmenter;
    double dice = 0;
};

inline constexpr std::size_t kMinSignificanceCases = 10;

struct SignificanceRow {
    std::string variant_a;
    std::string variant_b;
    std::string segmenter;
    std::size_t n = 0;  // paired cases
    std::optional<double> statistic;  // empty when n < kMinSignificanceCases
    std::optional<double> p_value;
};

/// Rows for every case x variant x {roi, whole}, sorted by (case, variant, region).
std::vector<QualityRow> evaluate_quality(const std::vector<VariantModel>& variants, const std::vector<Case>& cases);
std::vector<QualitySummaryRow> summarize_quality(const std::vector<QualityRow>& rows);

struct DownstreamResult {
    std::vector<DiceRow> dice;  // sorted by (case, variant, segmenter)
    std::vector<SignificanceRow> significance;
};

/// Per-case hard Dice for every (variant, segmenter) pair, plus a two-sided
/// Wilcoxon signed-rank test between "tod" and each other variant per
/// segmenter (when a "tod" variant is present).
DownstreamResult evaluate_downstream(const std::vector<VariantModel>& variants,
                                     const std::vector<SegmenterModel>& segmenters, const std::vector<Case>& cases);

/// Mean Dice per (variant, segmenter) from a Dice table.
double mean_dice_for(const std::vector<DiceRow>& rows, const std::string& variant, const std::string& segmenter);
/// Mean of a quality field per (variant, region).
double mean_quality_for(const std::vector<QualityRow>& rows, const std::string& variant, const std::string& region,
                        double QualityRow::*field);

struct GradMap {
    LossName loss;
    Image map;  // |dL/dx_hat| scaled to [0, 1] by its maximum
    double roi_mass_fraction = 0;
};

inline constexpr LossName kGradMapLosses[] = {LossName::task, LossName::mse, LossName::l1, LossName::perceptual};

/// For x_hat = G(LDCT), backpropagates each loss to x_hat only and returns
/// the normalized magnitude map with its ROI share sum_roi|g| / sum|g|.
/// All networks run in eval mode; no parameter gradient is produced.
std::vector<GradMap> gradient_maps(Network& denoiser, Network& segmenter, Network& features, const Case& c);

struct RoiMassRow {
    std::string loss;
    std::string case_id;
    double roi_mass_fraction = 0;
    double roi_area_fraction = 0;
};

void write_quality_csv(const std::filesystem::path& path, const std::vector<QualityRow>& rows);
void write_quality_summary_csv(const std::filesystem::path& path, const std::vector<QualitySummaryRow>& rows);
void write_dice_csv(const std::filesystem::path& path, const std::vector<DiceRow>& rows);
void write_significance_csv(const std::filesystem::path& path, const std::vector<SignificanceRow>& rows);
void write_roi_mass_csv(const std::filesystem::path& path, const std::vector<RoiMassRow>& rows);

/// Fixed-precision text form used by every CSV writer ("inf" for infinity).
std::string format_number(double v);

}  // namespace taskden
