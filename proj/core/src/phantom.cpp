#include "taskden/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace taskden {

namespace {

constexpr double kTissue = 0.45;
constexpr int kSupersample = 4;

struct Ellipse {
    double cx, cy, ax, ay, angle;

    bool contains(double u, double v) const {
        const double c = std::cos(angle), s = std::sin(angle);
        const double du = u - cx, dv = v - cy;
        const double lu = c * du + s * dv, lv = -s * du + c * dv;
        return (lu * lu) / (ax * ax) + (lv * lv) / (ay * ay) <= 1.0;
    }
};

struct Organ {
    double cx, cy, radius, stretch, angle;
    std::array<double, 3> amplitude;  // harmonics 2..4
    std::array<double, 3> phase;

    bool contains(double u, double v) const {
        const double c = std::cos(angle), s = std::sin(angle);
        const double du = u - cx, dv = v - cy;
        const double lu = (c * du + s * dv) / stretch, lv = -s * du + c * dv;
        const double rho = std::hypot(lu, lv);
        const double theta = std::atan2(lv, lu);
        double r = 1.0;
        for (int k = 0; k < 3; ++k) r += amplitude[k] * std::cos((k + 2) * theta + phase[k]);
        return rho <= radius * r;
    }
};

struct Wave {
    double amp, fu, fv, phase;
};

class Sampler {
public:
    explicit Sampler(std::uint64_t seed) : rng_(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

private:
    std::mt19937_64 rng_;
};

// Normalized coordinate of a sample position; the image spans [-1, 1].
double coord(std::size_t pixel, int sub, std::size_t size) {
    return ((static_cast<double>(pixel) + (sub + 0.5) / kSupersample) / static_cast<double>(size)) * 2.0 - 1.0;
}

double center_coord(std::size_t pixel, std::size_t size) {
    return ((static_cast<double>(pixel) + 0.5) / static_cast<double>(size)) * 2.0 - 1.0;
}

Mask rasterize(std::size_t size, const auto& shape) {
    Mask m(size, size);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            m.values[y * size + x] = shape.contains(center_coord(x, size), center_coord(y, size)) ? 1 : 0;
        }
    }
    return m;
}

// True when some pixel of `a` lies within `gap` pixels (Chebyshev) of `b`.
bool near(const Mask& a, const Mask& b, int gap) {
    const auto n = static_cast<int>(a.width);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            if (!a.values[y * n + x]) continue;
            for (int dy = -gap; dy <= gap; ++dy) {
                for (int dx = -gap; dx <= gap; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy >= 0 && yy < n && xx >= 0 && xx < n && b.values[yy * n + xx]) return true;
                }
            }
        }
    }
    return false;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream) {
    auto mix = [](std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(master) ^ index) ^ (stream * 0xD1B54A32D192ED03ULL));
}

Phantom generate_phantom(std::uint64_t seed, std::size_t size) {
    if (size < 32) throw std::invalid_argument("generate_phantom: size must be at least 32");
    Sampler rng(seed);

    const Ellipse body{rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04), rng.uniform(0.80, 0.92),
                       rng.uniform(0.62, 0.80), rng.uniform(-0.15, 0.15)};
    std::array<Wave, 3> texture{};
    for (auto& w : texture) {
        const double freq = rng.uniform(1.5, 4.0), dir = rng.uniform(0.0, std::numbers::pi);
        w = {rng.uniform(0.005, 0.015), freq * std::cos(dir), freq * std::sin(dir), rng.uniform(0.0, 2 * std::numbers::pi)};
    }
    const Mask body_mask = rasterize(size, body);

    Organ organ{};
    Mask organ_mask;
    for (;;) {
        const double r = std::sqrt(rng.uniform(0.0, 1.0)), t = rng.uniform(0.0, 2 * std::numbers::pi);
        organ.cx = body.cx + 0.5 * body.ax * r * std::cos(t);
        organ.cy = body.cy + 0.5 * body.ay * r * std::sin(t);
        organ.radius = rng.uniform(0.22, 0.34);
        organ.stretch = rng.uniform(0.75, 1.25);
        organ.angle = rng.uniform(0.0, std::numbers::pi);
        for (int k = 0; k < 3; ++k) {
            organ.amplitude[k] = rng.uniform(0.0, 0.18 / (k + 1));
            organ.phase[k] = rng.uniform(0.0, 2 * std::numbers::pi);
        }
        organ_mask = rasterize(size, organ);
        for (std::size_t i = 0; i < organ_mask.size(); ++i) organ_mask.values[i] &= body_mask.values[i];
        const double f = organ_mask.fraction();
        if (f >= kMinOrganFraction && f <= kMaxOrganFraction) break;
    }
    const double organ_value = rng.uniform(0.60, 0.66);

    std::vector<std::pair<Ellipse, double>> distractors;
    const int wanted = rng.integer(2, 5);
    for (int attempt = 0; attempt < 200 && static_cast<int>(distractors.size()) < wanted; ++attempt) {
        const double r = std::sqrt(rng.uniform(0.0, 1.0)), t = rng.uniform(0.0, 2 * std::numbers::pi);
        Ellipse e{body.cx + 0.72 * body.ax * r * std::cos(t), body.cy + 0.72 * body.ay * r * std::sin(t),
                  rng.uniform(0.06, 0.15), rng.uniform(0.06, 0.15), rng.uniform(0.0, std::numbers::pi)};
        const double value = rng.uniform(0.0, 1.0) < 0.5 ? rng.uniform(0.15, 0.30) : rng.uniform(0.80, 0.95);
        if (near(rasterize(size, e), organ_mask, 2)) continue;
        distractors.emplace_back(e, value);
    }

    Phantom p;
    p.seed = seed;
    p.organ_mask = std::move(organ_mask);
    p.ndct = Image(size, size);
    const double inv = 1.0 / (kSupersample * kSupersample);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            double acc = 0.0;
            for (int sy = 0; sy < kSupersample; ++sy) {
                for (int sx = 0; sx < kSupersample; ++sx) {
                    const double u = coord(x, sx, size), v = coord(y, sy, size);
                    if (!body.contains(u, v)) continue;
                    double value = kTissue;
                    for (const auto& w : texture) {
                        value += w.amp * std::sin(std::numbers::pi * (w.fu * u + w.fv * v) + w.phase);
                    }
                    for (const auto& [e, dv] : distractors) {
                        if (e.contains(u, v)) value = dv;
                    }
                    if (organ.contains(u, v)) value = organ_value;
                    acc += value;
                }
            }
            p.ndct.at(y, x) = std::clamp(acc * inv, 0.0, 1.0);
        }
    }
    return p;
}

}  // namespace taskden
