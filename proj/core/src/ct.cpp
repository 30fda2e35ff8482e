#include "taskden/ct.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

namespace taskden {

namespace {

double bilinear(const Image& img, double x, double y) {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
    const double wx = x - fx, wy = y - fy;
    const auto w = static_cast<long>(img.width), h = static_cast<long>(img.height);
    auto px = [&](long yy, long xx) {
        return (xx < 0 || yy < 0 || xx >= w || yy >= h) ? 0.0 : img.pixels[static_cast<std::size_t>(yy * w + xx)];
    };
    return (1 - wy) * ((1 - wx) * px(y0, x0) + wx * px(y0, x0 + 1)) +
           wy * ((1 - wx) * px(y0 + 1, x0) + wx * px(y0 + 1, x0 + 1));
}

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Frequency response of the discrete ramp kernel times the apodization window.
std::vector<double> ramp_response(std::size_t padded, double spacing, RampWindow window) {
    std::vector<std::complex<double>> kernel(padded, 0.0);
    const double pi2 = std::numbers::pi * std::numbers::pi;
    const auto half = static_cast<long>(padded / 2);
    for (long n = -half + 1; n <= half; ++n) {
        double h = 0.0;
        if (n == 0) {
            h = 1.0 / (4.0 * spacing * spacing);
        } else if (n % 2 != 0) {
            h = -1.0 / (static_cast<double>(n * n) * pi2 * spacing * spacing);
        }
        kernel[static_cast<std::size_t>((n + static_cast<long>(padded)) % static_cast<long>(padded))] = h;
    }
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spectrum;
    fft.fwd(spectrum, kernel);
    std::vector<double> response(padded);
    for (std::size_t k = 0; k < padded; ++k) {
        const double kk = k <= padded / 2 ? static_cast<double>(k) : static_cast<double>(k) - padded;
        const double omega = std::abs(kk) / (padded / 2.0);  // 1 at Nyquist
        double w = 1.0;
        switch (window) {
            case RampWindow::ram_lak: break;
            case RampWindow::shepp_logan: {
                const double arg = std::numbers::pi * omega / 2.0;
                w = arg == 0.0 ? 1.0 : std::sin(arg) / arg;
                break;
            }
            case RampWindow::hann: w = 0.5 * (1.0 + std::cos(std::numbers::pi * omega)); break;
        }
        response[k] = spectrum[k].real() * w * spacing;
    }
    return response;
}

}  // namespace

std::size_t min_detector_bins(std::size_t size) {
    auto bins = static_cast<std::size_t>(std::ceil(std::sqrt(2.0) * static_cast<double>(size)));
    return bins % 2 == 0 ? bins + 1 : bins;
}

Sinogram radon(const Image& image, std::size_t angles, std::size_t bins) {
    if (image.height != image.width) throw std::invalid_argument("radon: image must be square");
    if (angles < 8) throw std::invalid_argument("radon: need at least 8 angles");
    if (bins < min_detector_bins(image.width)) {
        throw std::invalid_argument("radon: " + std::to_string(bins) + " bins do not cover the image diagonal");
    }
    Sinogram s;
    s.angles = angles;
    s.bins = bins;
    s.values.assign(angles * bins, 0.0);
    s.angle_list.resize(angles);
    const double c = (static_cast<double>(image.width) - 1.0) / 2.0;
    const double step = 0.5;
    const double reach = std::ceil(static_cast<double>(bins) / 2.0) + 1.0;
    const auto samples = static_cast<long>(reach / step);
    for (std::size_t a = 0; a < angles; ++a) {
        const double theta = std::numbers::pi * static_cast<double>(a) / static_cast<double>(angles);
        s.angle_list[a] = theta;
        const double ct = std::cos(theta), st = std::sin(theta);
        for (std::size_t b = 0; b < bins; ++b) {
            const double t = (static_cast<double>(b) - (static_cast<double>(bins) - 1.0) / 2.0) * s.detector_spacing;
            double acc = 0.0;
            for (long k = -samples; k <= samples; ++k) {
                const double sv = static_cast<double>(k) * step;
                acc += bilinear(image, c + t * ct - sv * st, c + t * st + sv * ct);
            }
            s.at(a, b) = acc * step;
        }
    }
    return s;
}

Sinogram apply_dose_noise(const Sinogram& sino, double photons_per_ray, std::uint64_t seed) {
    if (!(photons_per_ray > 0)) throw std::invalid_argument("apply_dose_noise: photons_per_ray must be positive");
    Sinogram noisy = sino;
    std::mt19937_64 rng(seed);
    for (double& p : noisy.values) {
        const double expected = photons_per_ray * std::exp(-p);
        std::poisson_distribution<long long> counts(expected);
        const double n = std::max<long long>(counts(rng), 1);
        p = -std::log(n / photons_per_ray);
    }
    return noisy;
}

Sinogram scale_sinogram(Sinogram sino, double factor) {
    for (double& v : sino.values) v *= factor;
    return sino;
}

Image fbp_reconstruct_unclamped(const Sinogram& sino, std::size_t size, RampWindow window) {
    if (sino.values.size() != sino.angles * sino.bins || sino.angle_list.size() != sino.angles) {
        throw std::invalid_argument("fbp_reconstruct: inconsistent sinogram geometry");
    }
    if (sino.bins < min_detector_bins(size)) {
        throw std::invalid_argument("fbp_reconstruct: detector does not cover a " + std::to_string(size) + " image");
    }
    const std::size_t padded = next_pow2(2 * sino.bins);
    const std::vector<double> response = ramp_response(padded, sino.detector_spacing, window);
    Eigen::FFT<double> fft;

    std::vector<double> filtered(sino.angles * sino.bins);
    std::vector<std::complex<double>> row(padded), spectrum, back;
    for (std::size_t a = 0; a < sino.angles; ++a) {
        std::fill(row.begin(), row.end(), 0.0);
        for (std::size_t b = 0; b < sino.bins; ++b) row[b] = sino.at(a, b);
        fft.fwd(spectrum, row);
        for (std::size_t k = 0; k < padded; ++k) spectrum[k] *= response[k];
        fft.inv(back, spectrum);
        for (std::size_t b = 0; b < sino.bins; ++b) filtered[a * sino.bins + b] = back[b].real();
    }

    Image out(size, size);
    const double c = (static_cast<double>(size) - 1.0) / 2.0;
    const double centre_bin = (static_cast<double>(sino.bins) - 1.0) / 2.0;
    const double weight = std::numbers::pi / static_cast<double>(sino.angles);
    for (std::size_t a = 0; a < sino.angles; ++a) {
        const double ct = std::cos(sino.angle_list[a]), st = std::sin(sino.angle_list[a]);
        const double* q = filtered.data() + a * sino.bins;
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                const double t = (static_cast<double>(x) - c) * ct + (static_cast<double>(y) - c) * st;
                const double pos = t / sino.detector_spacing + centre_bin;
                const double fp = std::floor(pos);
                const auto i0 = static_cast<long>(fp);
                const double w = pos - fp;
                double v = 0.0;
                if (i0 >= 0 && i0 < static_cast<long>(sino.bins)) v += (1 - w) * q[i0];
                if (i0 + 1 >= 0 && i0 + 1 < static_cast<long>(sino.bins)) v += w * q[i0 + 1];
                out.at(y, x) += v * weight;
            }
        }
    }
    return out;
}

Image fbp_reconstruct(const Sinogram& sino, std::size_t size, RampWindow window) {
    Image out = fbp_reconstruct_unclamped(sino, size, window);
    for (double& v : out.pixels) v = std::clamp(v, 0.0, 1.0);
    return out;
}

}  // namespace taskden
