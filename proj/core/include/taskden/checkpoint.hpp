#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "taskden/tensor.hpp"

namespace taskden {

/// Binary parameter checkpoint:
///
///   "TODN" | u16 version |
///   repeated { u32 name_len | name (UTF-8) | u8 rank | u32 extent[rank] | f32 data[numel] }
///
/// All integers and floats are little-endian. Records run to end of file.
inline constexpr char kCheckpointMagic[4] = {'T', 'O', 'D', 'N'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& records);
std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes via a temporary file and rename, so an interrupted write never
/// leaves a truncated checkpoint behind.
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Atomically replaces `path` with `bytes`.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace taskden
