#include "taskden/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "taskden/checkpoint.hpp"
#include "taskden/real.hpp"

namespace taskden {

namespace {

std::vector<std::uint8_t> encode_pgm16(std::size_t height, std::size_t width, const std::vector<std::uint16_t>& samples) {
    const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    bytes.reserve(bytes.size() + samples.size() * 2);
    for (std::uint16_t s : samples) {
        bytes.push_back(static_cast<std::uint8_t>(s >> 8));
        bytes.push_back(static_cast<std::uint8_t>(s & 0xFF));
    }
    return bytes;
}

std::vector<std::uint16_t> decode_pgm16(const std::filesystem::path& path, std::size_t& height, std::size_t& width) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    std::size_t pos = 0;
    auto next_token = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        std::string token;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) token.push_back(static_cast<char>(bytes[pos++]));
        return token;
    };
    if (next_token() != "P5") throw IoError(path.string() + ": not a binary PGM");
    try {
        width = std::stoul(next_token());
        height = std::stoul(next_token());
        if (std::stoul(next_token()) != 65535) throw IoError(path.string() + ": expected maxval 65535");
    } catch (const std::logic_error&) {
        throw IoError(path.string() + ": malformed PGM header");
    }
    ++pos;  // single whitespace after maxval
    if (bytes.size() - pos != width * height * 2) throw IoError(path.string() + ": truncated PGM data");
    std::vector<std::uint16_t> samples(width * height);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i] = static_cast<std::uint16_t>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1]);
    }
    return samples;
}

}  // namespace

std::size_t Mask::count() const {
    return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

void write_pgm16(const std::filesystem::path& path, const Image& image) {
    std::vector<std::uint16_t> samples(image.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i] = static_cast<std::uint16_t>(std::lround(std::clamp(image.pixels[i], 0.0, 1.0) * 65535.0));
    }
    write_file_atomic(path, encode_pgm16(image.height, image.width, samples));
}

Image read_pgm16(const std::filesystem::path& path) {
    std::size_t h = 0, w = 0;
    const auto samples = decode_pgm16(path, h, w);
    Image image(h, w);
    for (std::size_t i = 0; i < samples.size(); ++i) image.pixels[i] = samples[i] / 65535.0;
    return image;
}

void write_mask_pgm16(const std::filesystem::path& path, const Mask& mask) {
    std::vector<std::uint16_t> samples(mask.size());
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = mask.values[i] ? 65535 : 0;
    write_file_atomic(path, encode_pgm16(mask.height, mask.width, samples));
}

Mask read_mask_pgm16(const std::filesystem::path& path) {
    std::size_t h = 0, w = 0;
    const auto samples = decode_pgm16(path, h, w);
    Mask mask(h, w);
    for (std::size_t i = 0; i < samples.size(); ++i) mask.values[i] = samples[i] >= 32768 ? 1 : 0;
    return mask;
}

}  // namespace taskden
