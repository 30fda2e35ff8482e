#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support/simulator_checks.hpp"
#include "taskden/ct.hpp"
#include "taskden/dataset.hpp"
#include "taskden/metrics.hpp"
#include "taskden/phantom.hpp"

namespace taskden {
namespace {

const std::size_t kBins = min_detector_bins(64);

TEST(Radon, DetectorCoversDiagonal) {
    EXPECT_EQ(kBins, 91u);
    EXPECT_EQ(kBins % 2, 1u);
    EXPECT_THROW(radon(Image(64, 64), 180, kBins - 1), std::invalid_argument);
    EXPECT_THROW(radon(Image(64, 64), 4, kBins), std::invalid_argument);
}

TEST(Radon, ZeroImageGivesZeroSinogram) {
    const Sinogram s = radon(Image(64, 64), 180, kBins);
    EXPECT_EQ(s.values.size(), 180 * kBins);
    for (double v : s.values) EXPECT_EQ(v, 0.0);
}

TEST(Radon, Linearity) {
    const Image a = generate_phantom(1, 64).ndct, b = generate_phantom(2, 64).ndct;
    Image scaled = a, summed = a;
    for (std::size_t i = 0; i < a.size(); ++i) {
        scaled.pixels[i] *= 2.5;
        summed.pixels[i] += b.pixels[i];
    }
    const Sinogram ra = radon(a, 30, kBins), rb = radon(b, 30, kBins);
    const Sinogram rs = radon(scaled, 30, kBins), rsum = radon(summed, 30, kBins);
    for (std::size_t i = 0; i < ra.values.size(); ++i) {
        EXPECT_NEAR(rs.values[i], 2.5 * ra.values[i], 1e-9 * (1 + std::abs(ra.values[i])));
        EXPECT_NEAR(rsum.values[i], ra.values[i] + rb.values[i], 1e-9 * (1 + std::abs(rsum.values[i])));
    }
}

TEST(Radon, CenteredDiskProjectionsPreserveArea) {
    const double radius = 20.0, mu = 0.7;
    Image disk(64, 64);
    const double c = 31.5;
    for (std::size_t y = 0; y < 64; ++y)
        for (std::size_t x = 0; x < 64; ++x)
            if (std::hypot(x - c, y - c) <= radius) disk.at(y, x) = mu;
    const double analytic = std::numbers::pi * radius * radius * mu;
    const Sinogram s = radon(disk, 180, kBins);
    for (std::size_t a = 0; a < s.angles; ++a) {
        double integral = 0.0;
        for (std::size_t b = 0; b < s.bins; ++b) integral += s.at(a, b) * s.detector_spacing;
        EXPECT_NEAR(integral, analytic, 0.01 * analytic) << "angle " << a;
    }
}

TEST(DoseNoise, HighDoseLimitMatchesInput) {
    const Image mu = generate_phantom(4, 64).ndct;
    const Sinogram clean = scale_sinogram(radon(mu, 60, kBins), 0.09);
    const Sinogram noisy = apply_dose_noise(clean, 1e12, 3);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < clean.values.size(); ++i) {
        num += std::pow(noisy.values[i] - clean.values[i], 2);
        den += std::pow(clean.values[i], 2);
    }
    EXPECT_LT(std::sqrt(num / den), 1e-3);
}

TEST(DoseNoise, DeterministicInSeed) {
    const Sinogram clean = scale_sinogram(radon(generate_phantom(4, 64).ndct, 30, kBins), 0.09);
    EXPECT_EQ(apply_dose_noise(clean, 1e4, 5).values, apply_dose_noise(clean, 1e4, 5).values);
    EXPECT_NE(apply_dose_noise(clean, 1e4, 5).values, apply_dose_noise(clean, 1e4, 6).values);
    EXPECT_THROW(apply_dose_noise(clean, 0.0, 1), std::invalid_argument);
}

TEST(DoseNoise, ZeroCountsClampToOnePhoton) {
    Sinogram s;
    s.angles = 1;
    s.bins = 1;
    s.values = {50.0};  // expected count ~ 0
    s.angle_list = {0.0};
    const Sinogram noisy = apply_dose_noise(s, 100.0, 1);
    EXPECT_DOUBLE_EQ(noisy.values[0], std::log(100.0));
}

TEST(DoseNoise, VarianceDecreasesWithDose) {
    const double v3 = testing::sinogram_noise_variance(1e3);
    const double v4 = testing::sinogram_noise_variance(1e4);
    const double v5 = testing::sinogram_noise_variance(1e5);
    EXPECT_GT(v3, v4);
    EXPECT_GT(v4, v5);
}

TEST(Fbp, ZeroSinogramGivesZeroImage) {
    const Image img = fbp_reconstruct(radon(Image(64, 64), 180, kBins), 64);
    for (double v : img.pixels) EXPECT_EQ(v, 0.0);
}

TEST(Fbp, NoiselessRoundTripWithinBody) {
    for (std::uint64_t seed : {0, 1, 2, 3, 4}) EXPECT_LT(testing::roundtrip_body_rmse(seed), 0.05) << seed;
}

TEST(Fbp, OutputClampedToUnitRange) {
    const Phantom p = generate_phantom(8, 64);
    const Image img = fbp_reconstruct(apply_dose_noise(radon(p.ndct, 90, kBins), 1e3, 1), 64);
    for (double v : img.pixels) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Fbp, LowerDoseGivesHigherError) {
    const Phantom p = generate_phantom(12, 64);
    SimulatorConfig low, high;
    low.photons_per_ray = 1e3;
    high.photons_per_ray = 1e5;
    EXPECT_GT(rmse(simulate_ldct(p.ndct, low, 7), p.ndct), rmse(simulate_ldct(p.ndct, high, 7), p.ndct));
}

}  // namespace
}  // namespace taskden
