#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace taskden {

/// Row-major 2-D real image.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

    double& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
    double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
    std::size_t size() const { return pixels.size(); }
};

/// Row-major binary mask (values 0 or 1).
struct Mask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> values;

    Mask() = default;
    Mask(std::size_t h, std::size_t w) : height(h), width(w), values(h * w, 0) {}

    std::size_t count() const;
    double fraction() const { return values.empty() ? 0.0 : static_cast<double>(count()) / values.size(); }
    std::size_t size() const { return values.size(); }
};

/// 16-bit binary PGM ("P5", maxval 65535, big-endian samples). Image values
/// are clamped to [0, 1] and quantized to round(v * 65535).
void write_pgm16(const std::filesystem::path& path, const Image& image);
Image read_pgm16(const std::filesystem::path& path);

/// Masks are stored as PGMs holding 0 or 65535.
void write_mask_pgm16(const std::filesystem::path& path, const Mask& mask);
Mask read_mask_pgm16(const std::filesystem::path& path);

}  // namespace taskden
