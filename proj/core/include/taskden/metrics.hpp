#pragma once

#include <vector>

#include "taskden/image.hpp"

namespace taskden {

/// sqrt(mean squared difference) over the mask pixels, or the whole image
/// when `mask` is null. Throws std::invalid_argument on shape mismatch or an
/// empty mask.
double rmse(const Image& a, const Image& b, const Mask* mask = nullptr);

/// 20 log10(peak / rmse); +infinity for identical images.
double psnr(const Image& a, const Image& b, const Mask* mask = nullptr, double peak = 1.0);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Local SSIM at every pixel, Gaussian-weighted 11x11 window (sigma 1.5,
/// dynamic range 1). Near the border the window is truncated to the image
/// and its weights renormalized.
Image ssim_map(const Image& a, const Image& b);

/// Mean of ssim_map over the mask pixels (window centers inside the mask),
/// or over the whole image.
double ssim(const Image& a, const Image& b, const Mask* mask = nullptr);

/// Pixels with probability >= threshold.
Mask threshold_mask(const Image& probs, double threshold = 0.5);

/// 2|A n B| / (|A| + |B|); 1 when both masks are empty.
double hard_dice(const Mask& pred, const Mask& truth);

double mean_of(const std::vector<double>& values);

}  // namespace taskden
