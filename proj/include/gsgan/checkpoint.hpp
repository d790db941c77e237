#pragma once

#include <bit>
#include <cstring>
#include <string>
#include <vector>

#include "gsgan/tensor.hpp"

namespace gsgan {

// Checkpoint file layout (all integers little-endian):
//   magic "GSGAN1\n"
//   version u32
//   config length u32, config UTF-8 key=value text
//   records until 4 bytes from EOF, each:
//     name length u32, name bytes,
//     dtype u8 (0 = f32, 1 = f64), rank u8, dims u64 each,
//     raw little-endian values
//   CRC32 u32 over everything after the magic
// The CRC is verified before any record is surfaced.

constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
    std::string name;
    std::uint8_t dtype = 0;  // 0 = f32, 1 = f64
    Shape dims;
    std::vector<std::uint8_t> bytes;
};

struct CheckpointData {
    std::uint32_t version = kCheckpointVersion;
    std::string config_text;
    std::vector<TensorRecord> records;

    const TensorRecord* record(const std::string& name) const {
        for (const auto& r : records)
            if (r.name == name) return &r;
        return nullptr;
    }
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

template <typename S>
constexpr std::uint8_t dtype_tag() {
    return sizeof(S) == 4 ? 0 : 1;
}

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

template <typename S>
TensorRecord to_record(const std::string& name, const Tensor<S>& t) {
    TensorRecord r;
    r.name = name;
    r.dtype = dtype_tag<S>();
    r.dims = t.shape();
    r.bytes.resize(t.numel() * sizeof(S));
    std::memcpy(r.bytes.data(), t.data(), r.bytes.size());
    return r;
}

template <typename S>
Tensor<S> from_record(const TensorRecord& r) {
    if (r.dtype != dtype_tag<S>())
        throw IoError("checkpoint: record '" + r.name + "' has dtype tag " +
                      std::to_string(r.dtype) + ", expected " + std::to_string(dtype_tag<S>()));
    Tensor<S> t(r.dims);
    if (r.bytes.size() != t.numel() * sizeof(S))
        throw IoError("checkpoint: record '" + r.name + "' payload size mismatch");
    std::memcpy(t.data(), r.bytes.data(), r.bytes.size());
    return t;
}

}  // namespace gsgan
