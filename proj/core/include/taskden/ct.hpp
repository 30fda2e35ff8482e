#pragma once

#include <cstdint>
#include <vector>

#include "taskden/image.hpp"

namespace taskden {

/// Parallel-beam sinogram: `angles` rows of `bins` detector samples.
struct Sinogram {
    std::size_t angles = 0;
    std::size_t bins = 0;
    std::vector<double> values;      // angles x bins, row-major
    std::vector<double> angle_list;  // radians, uniformly covering [0, pi)
    double detector_spacing = 1.0;   // in pixel widths

    double& at(std::size_t a, std::size_t b) { return values[a * bins + b]; }
    double at(std::size_t a, std::size_t b) const { return values[a * bins + b]; }
};

/// Smallest detector count covering the image diagonal (forced odd so that
/// one bin sits on the rotation axis).
std::size_t min_detector_bins(std::size_t size);

/// Line integrals along parallel rays, bilinear sampling every half pixel.
/// Linear in the image. Requires a square image, angles >= 8 and
/// bins >= min_detector_bins(size).
Sinogram radon(const Image& image, std::size_t angles, std::size_t bins);

/// Transmission noise: counts ~ Poisson(I0 exp(-p)), zero counts clamped to
/// one photon, then p_noisy = -ln(counts / I0). Deterministic in `seed`.
Sinogram apply_dose_noise(const Sinogram& sino, double photons_per_ray, std::uint64_t seed);

/// Multiplies every line integral by `factor` (unit conversion between image
/// intensity and physical attenuation).
Sinogram scale_sinogram(Sinogram sino, double factor);

enum class RampWindow { ram_lak, shepp_logan, hann };

/// Filtered back-projection. Each projection is convolved with the
/// band-limited ramp kernel (built in the spatial domain, applied in the
/// frequency domain via zero-padded FFT) times the chosen apodization
/// window, then back-projected with linear interpolation. The result is
/// clamped to [0, 1].
Image fbp_reconstruct(const Sinogram& sino, std::size_t size, RampWindow window = RampWindow::shepp_logan);

/// Same as fbp_reconstruct without the final clamp.
Image fbp_reconstruct_unclamped(const Sinogram& sino, std::size_t size, RampWindow window = RampWindow::shepp_logan);

}  // namespace taskden
