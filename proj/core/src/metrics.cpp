#include "taskden/metrics.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace taskden {

namespace {

void require_same(const Image& a, const Image& b, const Mask* mask, const char* what) {
    if (a.height != b.height || a.width != b.width) throw std::invalid_argument(std::string(what) + ": shape mismatch");
    if (mask) {
        if (mask->height != a.height || mask->width != a.width) {
            throw std::invalid_argument(std::string(what) + ": mask shape mismatch");
        }
        if (mask->count() == 0) throw std::invalid_argument(std::string(what) + ": empty mask");
    }
}

std::vector<double> gaussian_kernel() {
    std::vector<double> k(kSsimWindow);
    const int r = kSsimWindow / 2;
    double total = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        k[i] = std::exp(-0.5 * (i - r) * (i - r) / (kSsimSigma * kSsimSigma));
        total += k[i];
    }
    for (double& v : k) v /= total;
    return k;
}

}  // namespace

double rmse(const Image& a, const Image& b, const Mask* mask) {
    require_same(a, b, mask, "rmse");
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (mask && !mask->values[i]) continue;
        const double d = a.pixels[i] - b.pixels[i];
        acc += d * d;
        ++n;
    }
    return std::sqrt(acc / static_cast<double>(n));
}

double psnr(const Image& a, const Image& b, const Mask* mask, double peak) {
    const double e = rmse(a, b, mask);
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(peak / e);
}

Image ssim_map(const Image& a, const Image& b) {
    require_same(a, b, nullptr, "ssim");
    if (a.height < static_cast<std::size_t>(kSsimWindow) || a.width < static_cast<std::size_t>(kSsimWindow)) {
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    }
    static const std::vector<double> kernel = gaussian_kernel();
    const double c1 = (kSsimK1 * 1.0) * (kSsimK1 * 1.0);
    const double c2 = (kSsimK2 * 1.0) * (kSsimK2 * 1.0);
    const long h = static_cast<long>(a.height), w = static_cast<long>(a.width), r = kSsimWindow / 2;
    Image out(a.height, a.width);
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            double wsum = 0, ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (long dy = -r; dy <= r; ++dy) {
                const long yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                for (long dx = -r; dx <= r; ++dx) {
                    const long xx = x + dx;
                    if (xx < 0 || xx >= w) continue;
                    const double k = kernel[dy + r] * kernel[dx + r];
                    const double va = a.at(yy, xx), vb = b.at(yy, xx);
                    wsum += k;
                    ma += k * va;
                    mb += k * vb;
                    saa += k * va * va;
                    sbb += k * vb * vb;
                    sab += k * va * vb;
                }
            }
            ma /= wsum;
            mb /= wsum;
            const double var_a = std::max(0.0, saa / wsum - ma * ma);
            const double var_b = std::max(0.0, sbb / wsum - mb * mb);
            const double cov = sab / wsum - ma * mb;
            out.at(y, x) = ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
    }
    return out;
}

double ssim(const Image& a, const Image& b, const Mask* mask) {
    require_same(a, b, mask, "ssim");
    const Image map = ssim_map(a, b);
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (mask && !mask->values[i]) continue;
        acc += map.pixels[i];
        ++n;
    }
    return acc / static_cast<double>(n);
}

Mask threshold_mask(const Image& probs, double threshold) {
    Mask m(probs.height, probs.width);
    for (std::size_t i = 0; i < probs.size(); ++i) m.values[i] = probs.pixels[i] >= threshold ? 1 : 0;
    return m;
}

double hard_dice(const Mask& pred, const Mask& truth) {
    if (pred.height != truth.height || pred.width != truth.width) {
        throw std::invalid_argument("hard_dice: shape mismatch");
    }
    std::size_t inter = 0, a = 0, b = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.values[i] != 0, t = truth.values[i] != 0;
        a += p;
        b += t;
        inter += p && t;
    }
    if (a + b == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

double mean_of(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

}  // namespace taskden
