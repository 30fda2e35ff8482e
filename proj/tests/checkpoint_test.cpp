#include <gtest/gtest.h>

#include <cstring>

#include "support/test_util.hpp"
#include "taskden/checkpoint.hpp"

namespace taskden {
namespace {

std::vector<NamedTensor> sample_records() {
    return {{"enc.conv0.weight", {2, 1, 3, 3}, std::vector<float>(18)},
            {"bias", {2}, {0.5f, -1.25f}},
            {"unicode.\xC3\xA9", {1}, {3.0f}}};
}

TEST(Checkpoint, EncodeDecodeRoundTripIsByteExact) {
    auto records = sample_records();
    for (std::size_t i = 0; i < 18; ++i) records[0].values[i] = 0.1f * float(i) - 0.7f;
    const auto bytes = encode_checkpoint(records);
    const auto decoded = decode_checkpoint(bytes);
    ASSERT_EQ(decoded.size(), records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        EXPECT_EQ(decoded[i].name, records[i].name);
        EXPECT_EQ(decoded[i].shape, records[i].shape);
        EXPECT_EQ(decoded[i].values, records[i].values);
    }
    EXPECT_EQ(encode_checkpoint(decoded), bytes);
}

TEST(Checkpoint, HeaderLayout) {
    const auto bytes = encode_checkpoint({{"ab", {1}, {1.0f}}});
    ASSERT_EQ(bytes.size(), 4u + 2 + 4 + 2 + 1 + 4 + 4);
    EXPECT_EQ(std::memcmp(bytes.data(), "TODN", 4), 0);
    EXPECT_EQ(bytes[4] | (bytes[5] << 8), kCheckpointVersion);
    EXPECT_EQ(bytes[6], 2);  // name length, little-endian u32
    EXPECT_EQ(bytes[10], 'a');
    EXPECT_EQ(bytes[12], 1);  // rank
    float v;
    std::memcpy(&v, bytes.data() + 17, 4);
    EXPECT_EQ(v, 1.0f);
}

TEST(Checkpoint, FileRoundTripAndCorruption) {
    testing::TempDir dir;
    const auto path = dir / "net.ckpt";
    save_checkpoint(path, sample_records());
    EXPECT_EQ(encode_checkpoint(load_checkpoint(path)), encode_checkpoint(sample_records()));

    auto bytes = read_file_bytes(path);
    bytes[0] = 'X';
    EXPECT_THROW(decode_checkpoint(bytes), IoError);
    bytes = read_file_bytes(path);
    bytes.resize(bytes.size() - 3);
    EXPECT_THROW(decode_checkpoint(bytes), IoError);
    EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), IoError);
}

}  // namespace
}  // namespace taskden
