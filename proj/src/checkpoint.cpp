#include "gsgan/checkpoint.hpp"

#include <fstream>

#include <zlib.h>

namespace gsgan {

namespace {

constexpr char kMagic[] = "GSGAN1\n";
constexpr std::size_t kMagicLen = 7;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    Reader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return p_[pos_++];
    }
    std::vector<std::uint8_t> bytes(std::size_t n) {
        need(n);
        std::vector<std::uint8_t> v(p_ + pos_, p_ + pos_ + n);
        pos_ += n;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p_ + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return n_ - pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > n_) throw IoError("checkpoint: truncated file");
    }
    const std::uint8_t* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
    std::vector<std::uint8_t> payload;
    put_u32(payload, data.version);
    put_u32(payload, static_cast<std::uint32_t>(data.config_text.size()));
    payload.insert(payload.end(), data.config_text.begin(), data.config_text.end());
    for (const auto& r : data.records) {
        put_u32(payload, static_cast<std::uint32_t>(r.name.size()));
        payload.insert(payload.end(), r.name.begin(), r.name.end());
        payload.push_back(r.dtype);
        payload.push_back(static_cast<std::uint8_t>(r.dims.size()));
        for (std::size_t d : r.dims) put_u64(payload, d);
        payload.insert(payload.end(), r.bytes.begin(), r.bytes.end());
    }
    const std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0, payload.data(), static_cast<uInt>(payload.size())));
    put_u32(payload, crc);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("checkpoint: cannot write " + path);
    out.write(kMagic, static_cast<std::streamsize>(kMagicLen));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("checkpoint: write failed for " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < kMagicLen + 12 || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0)
        throw IoError("checkpoint: " + path + " is not a GSGAN1 checkpoint");

    const std::uint8_t* payload = bytes.data() + kMagicLen;
    const std::size_t payload_len = bytes.size() - kMagicLen - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
        stored |= static_cast<std::uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);
    const std::uint32_t computed =
        static_cast<std::uint32_t>(::crc32(0, payload, static_cast<uInt>(payload_len)));
    if (stored != computed)
        throw IoError("checkpoint: CRC mismatch in " + path + " (file corrupt)");

    Reader r(payload, payload_len);
    CheckpointData data;
    data.version = r.u32();
    if (data.version != kCheckpointVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(data.version));
    data.config_text = r.str(r.u32());
    while (r.remaining() > 0) {
        TensorRecord rec;
        rec.name = r.str(r.u32());
        rec.dtype = r.u8();
        if (rec.dtype > 1)
            throw IoError("checkpoint: record '" + rec.name + "' has unknown dtype tag");
        const std::size_t rank = r.u8();
        std::size_t numel = 1;
        for (std::size_t i = 0; i < rank; ++i) {
            rec.dims.push_back(static_cast<std::size_t>(r.u64()));
            numel *= rec.dims.back();
        }
        rec.bytes = r.bytes(numel * (rec.dtype == 0 ? 4 : 8));
        data.records.push_back(std::move(rec));
    }
    return data;
}

}  // namespace gsgan
