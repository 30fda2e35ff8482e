#include "taskden/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "taskden/real.hpp"

namespace taskden {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    out.insert(out.end(), bytes, bytes + sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string get_string(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw IoError("checkpoint truncated");
    }
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& records) {
    std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
    put<std::uint16_t>(out, kCheckpointVersion);
    for (const auto& r : records) {
        if (r.shape.size() > 255) throw IoError("checkpoint: rank of '" + r.name + "' exceeds 255");
        if (shape_numel(r.shape) != r.values.size()) {
            throw IoError("checkpoint: record '" + r.name + "' has " + std::to_string(r.values.size()) +
                          " values for shape " + shape_string(r.shape));
        }
        put<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
        out.insert(out.end(), r.name.begin(), r.name.end());
        put<std::uint8_t>(out, static_cast<std::uint8_t>(r.shape.size()));
        for (std::size_t e : r.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(e));
        const std::size_t offset = out.size();
        out.resize(offset + r.values.size() * sizeof(float));
        std::memcpy(out.data() + offset, r.values.data(), r.values.size() * sizeof(float));
    }
    return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader in(bytes);
    if (in.get_string(4) != std::string(kCheckpointMagic, 4)) throw IoError("checkpoint: bad magic");
    const auto version = in.get<std::uint16_t>();
    if (version != kCheckpointVersion) throw IoError("checkpoint: unsupported version " + std::to_string(version));
    std::vector<NamedTensor> records;
    while (!in.done()) {
        NamedTensor r;
        r.name = in.get_string(in.get<std::uint32_t>());
        const auto rank = in.get<std::uint8_t>();
        for (std::uint8_t i = 0; i < rank; ++i) r.shape.push_back(in.get<std::uint32_t>());
        r.values.resize(shape_numel(r.shape));
        for (float& v : r.values) v = in.get<float>();
        records.push_back(std::move(r));
    }
    return records;
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records) {
    write_file_atomic(path, encode_checkpoint(records));
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file_bytes(path));
}

}  // namespace taskden
